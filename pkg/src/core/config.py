"""Configuration management for the nonvariational finite element solver."""

import os
from pathlib import Path
from typing import Dict, Optional, Union

from dotenv import dotenv_values, load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings:
    """Solver settings loaded from environment variables."""

    # Output and logging
    OUTPUT_DIR: str = os.getenv("NVFEM_OUTPUT_DIR", "results")
    LOG_LEVEL: str = os.getenv("NVFEM_LOG_LEVEL", "INFO").upper()

    # Newton iteration
    NEWTON_TOL: float = float(os.getenv("NVFEM_NEWTON_TOL", "1e-10"))
    NEWTON_MAX_ITER: int = int(os.getenv("NVFEM_NEWTON_MAX_ITER", "50"))
    CONVEXITY_TOL: float = float(os.getenv("NVFEM_CONVEXITY_TOL", "1e-2"))
    DIVERGENCE_FACTOR: float = float(os.getenv("NVFEM_DIVERGENCE_FACTOR", "1e3"))

    # Meshes
    MESH_SEED: int = int(os.getenv("NVFEM_MESH_SEED", "0"))
    DEFAULT_PERTURB: float = float(os.getenv("NVFEM_DEFAULT_PERTURB", "0.1"))

    # Quadrature: Gauss points per collapsed direction (exact to degree 2n - 1)
    TRIANGLE_QUADRATURE_ORDER: int = int(os.getenv("NVFEM_TRIANGLE_QUADRATURE_ORDER", "5"))
    EDGE_QUADRATURE_POINTS: int = int(os.getenv("NVFEM_EDGE_QUADRATURE_POINTS", "5"))

    # Sparse direct solver
    PIVOT_TOL: float = float(os.getenv("NVFEM_PIVOT_TOL", "1e-14"))
    RESIDUAL_TOL: float = float(os.getenv("NVFEM_RESIDUAL_TOL", "1e-10"))

    def validate_settings(self) -> None:
        """Validate that numeric settings lie in their usable ranges."""
        if self.LOG_LEVEL not in ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]:
            raise ValueError(f"NVFEM_LOG_LEVEL must be a logging level name, got '{self.LOG_LEVEL}'")

        if self.NEWTON_TOL <= 0:
            raise ValueError(f"NVFEM_NEWTON_TOL must be positive, got {self.NEWTON_TOL}")

        if self.NEWTON_MAX_ITER < 1:
            raise ValueError(f"NVFEM_NEWTON_MAX_ITER must be at least 1, got {self.NEWTON_MAX_ITER}")

        if self.CONVEXITY_TOL < 0:
            raise ValueError(f"NVFEM_CONVEXITY_TOL must be nonnegative, got {self.CONVEXITY_TOL}")

        if self.DIVERGENCE_FACTOR <= 1:
            raise ValueError(f"NVFEM_DIVERGENCE_FACTOR must exceed 1, got {self.DIVERGENCE_FACTOR}")

        if not 0 <= self.DEFAULT_PERTURB < 0.3:
            raise ValueError(f"NVFEM_DEFAULT_PERTURB must lie in [0, 0.3), got {self.DEFAULT_PERTURB}")

        # The triangle rule must stay exact to degree 8
        if self.TRIANGLE_QUADRATURE_ORDER < 5:
            raise ValueError(
                "NVFEM_TRIANGLE_QUADRATURE_ORDER must be at least 5 "
                f"(exact to degree 9), got {self.TRIANGLE_QUADRATURE_ORDER}"
            )

        if self.EDGE_QUADRATURE_POINTS < 5:
            raise ValueError(
                f"NVFEM_EDGE_QUADRATURE_POINTS must be at least 5, got {self.EDGE_QUADRATURE_POINTS}"
            )

        if self.PIVOT_TOL <= 0 or self.RESIDUAL_TOL <= 0:
            raise ValueError("NVFEM_PIVOT_TOL and NVFEM_RESIDUAL_TOL must be positive")


def load_config_file(path: Union[str, Path]) -> Dict[str, Optional[str]]:
    """
    Read a flat key=value experiment file.

    Keys are lower-cased and dashes become underscores so that file keys line
    up with command-line flag names (``half-width`` and ``half_width`` agree).

    Args:
        path: Path to the experiment file

    Returns:
        dict: Raw string values keyed by normalized name

    Raises:
        FileNotFoundError: If the file does not exist
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")

    raw = dotenv_values(path)
    return {key.strip().lower().replace("-", "_"): value for key, value in raw.items()}


# Global settings instance
settings = Settings()
