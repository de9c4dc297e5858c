"""Command handlers of the CLI: build the run configuration, run a study, write its artifacts."""

import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import pandas as pd
from pydantic import ValidationError as PydanticValidationError

from src.api.models import RunConfig
from src.core.config import load_config_file, settings
from src.core.exceptions import (
    BaseSolverException,
    EllipticityError,
    InitializationError,
    MeshInvariantError,
    MeshParseError,
    NonConvergenceError,
    OutputError,
    ValidationError,
)
from src.services.analysis import (
    linear_case,
    manufactured_problem,
    run_convergence_study,
    run_curvature_sweep,
    run_linear_study,
)
from src.services.csv_exporter import CSVExporter
from src.services.field_writer import emit_field
from src.services.mesh import Mesh, generate_square_mesh, mesh_info, refine_uniform, save_mesh
from src.utils.file_operations import ensure_writable_dir, write_json_file, write_text_file
from src.utils.hash_utils import config_fingerprint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NONCONVERGENCE = 2

# Per-command defaults, overridden by the config file and then by flags
COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "converge": {"problem": "quartic", "n": 4, "half_width": 0.5, "levels": 4},
    "sweep": {
        "problem": "constant-k", "n": 24, "half_width": 0.57, "levels": 1,
        "perturb": settings.DEFAULT_PERTURB,
    },
    "solve-linear": {"coefficient": "identity", "n": 4, "half_width": 0.5, "levels": 4},
    "mesh-info": {"n": 4, "half_width": 0.5, "levels": 1},
}

# Config-file keys that differ from RunConfig field names
KEY_ALIASES = {"k": "k_values", "out": "out_dir"}

_csv_exporter: Optional[CSVExporter] = None


def get_csv_exporter() -> CSVExporter:
    """Get CSV exporter instance, initializing if needed."""
    global _csv_exporter
    if _csv_exporter is None:
        _csv_exporter = CSVExporter()
    return _csv_exporter


def parse_k_values(value: Union[str, float, List[float], None]) -> List[float]:
    """Parse ``V[,V...]`` into floats."""
    if value is None or value == "":
        return []
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    if isinstance(value, (int, float)):
        return [float(value)]
    try:
        return [float(token) for token in str(value).split(",") if token.strip()]
    except ValueError as e:
        raise ValidationError(f"Cannot parse curvature list '{value}': {e}") from e


def build_run_config(
    command: str,
    overrides: Optional[Dict[str, Any]] = None,
    config_path: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """
    Merge command defaults, an optional key=value file and command-line overrides.

    Args:
        command: CLI command name
        overrides: Flag values; ``None`` entries are ignored
        config_path: Optional experiment file

    Returns:
        RunConfig: The validated configuration

    Raises:
        ValidationError: On unknown keys or values outside their ranges
        FileNotFoundError: If ``config_path`` does not exist
    """
    if command not in COMMAND_DEFAULTS:
        raise ValidationError(f"Unknown command '{command}'")

    values: Dict[str, Any] = {"command": command, **COMMAND_DEFAULTS[command]}
    sources: List[Dict[str, Any]] = []
    if config_path is not None:
        sources.append(load_config_file(config_path))
    if overrides:
        sources.append(overrides)

    known = set(RunConfig.model_fields)
    for source in sources:
        for key, value in source.items():
            if value is None:
                continue
            key = KEY_ALIASES.get(key, key)
            if key not in known:
                raise ValidationError(f"Unknown configuration key '{key}'")
            values[key] = parse_k_values(value) if key == "k_values" else value

    try:
        return RunConfig(**values)
    except PydanticValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ValidationError(f"Invalid configuration: {details}") from e


def _base_mesh(cfg: RunConfig) -> Mesh:
    return generate_square_mesh(-cfg.half_width, cfg.half_width, cfg.n, cfg.perturb, cfg.seed)


def _print_table(df: pd.DataFrame) -> None:
    print(df.to_string(index=False, float_format=lambda v: f"{v:.4e}", na_rep=""))


def cmd_converge(cfg: RunConfig) -> int:
    """Convergence study of a manufactured problem; writes convergence.csv, meshes and fields."""
    out = ensure_writable_dir(cfg.out_dir)
    problem = manufactured_problem(cfg.problem, cfg.half_width)

    def on_level(level, mesh, U, H, trace) -> None:
        write_text_file(out / f"mesh_{level}.txt", save_mesh(mesh))
        emit_field(U, out / f"field_{problem.name}_L{level}.dat")

    status = EXIT_OK
    try:
        table = run_convergence_study(problem, _base_mesh(cfg), cfg.levels, cfg.newton(), on_level)
    except NonConvergenceError as e:
        logger.error(f"Convergence study stopped: {e}")
        print(f"Error: {e}", file=sys.stderr)
        table = e.table
        status = EXIT_NONCONVERGENCE

    if table is not None and table.records:
        exporter = get_csv_exporter()
        exporter.write(exporter.export_convergence(table), out / "convergence.csv")
        _print_table(exporter.convergence_frame(table))
    return status


def cmd_sweep(cfg: RunConfig) -> int:
    """Constant-curvature sweep with g = 0; failures become converged=false rows."""
    out = ensure_writable_dir(cfg.out_dir)
    mesh = _base_mesh(cfg)
    logger.info(f"Sweep over K = {sorted(cfg.k_values)} on {mesh.num_cells} cells")

    def on_converged(K, U, H, trace) -> None:
        emit_field(U, out / f"field_K{K:g}.dat")

    records = run_curvature_sweep(
        cfg.k_values, mesh, cfg.half_width, cfg.newton(), cfg.continuation, on_converged
    )

    exporter = get_csv_exporter()
    exporter.write(exporter.export_sweep(records), out / "sweep.csv")
    _print_table(exporter.sweep_frame(records))

    converged = [r.K for r in records if r.converged]
    failed = [r.K for r in records if not r.converged]
    below_failure = [k for k in converged if not failed or k < min(failed)]
    payload = cfg.fingerprint_payload()
    write_json_file(out / "sweep_report.json", {
        "config": payload,
        "config_fingerprint": config_fingerprint(payload),
        "num_cells": mesh.num_cells,
        "boundary_data": "g = 0",
        "note": (
            "Boundary data is not stated for the constant curvature runs and is taken as g = 0; "
            "the observed largest solvable K depends on this choice and on the mesh."
        ),
        "largest_converged_K": max(below_failure) if below_failure else None,
        "smallest_failed_K": min(failed) if failed else None,
        "results": [r.model_dump() for r in records],
    })
    return EXIT_OK if not failed else EXIT_NONCONVERGENCE


def cmd_solve_linear(cfg: RunConfig) -> int:
    """Linear nonvariational solves of a built-in coefficient case; writes solve_linear.csv."""
    out = ensure_writable_dir(cfg.out_dir)
    case = linear_case(cfg.coefficient, cfg.half_width)

    def on_level(level, mesh, U, H, trace) -> None:
        emit_field(U, out / f"field_linear_L{level}.dat")

    table = run_linear_study(case, _base_mesh(cfg), cfg.levels, on_level)
    exporter = get_csv_exporter()
    exporter.write(exporter.export_convergence(table), out / "solve_linear.csv")
    _print_table(exporter.convergence_frame(table))
    return EXIT_OK


def cmd_mesh_info(cfg: RunConfig) -> int:
    """Summaries of the base mesh and its refinements; writes mesh_<level>.txt."""
    out = ensure_writable_dir(cfg.out_dir)
    mesh = _base_mesh(cfg)
    rows = []
    for level in range(cfg.levels):
        if level > 0:
            mesh = refine_uniform(mesh)
        write_text_file(out / f"mesh_{level}.txt", save_mesh(mesh))
        rows.append({"level": level, **mesh_info(mesh)})
    _print_table(pd.DataFrame(rows))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "converge": cmd_converge,
    "sweep": cmd_sweep,
    "solve-linear": cmd_solve_linear,
    "mesh-info": cmd_mesh_info,
}


def run_command(cfg: RunConfig) -> int:
    """
    Run the handler of ``cfg.command`` and translate failures into exit codes.

    Returns:
        int: 0 on success, 1 on configuration or output errors, 2 when a
            solve did not converge
    """
    handler = COMMANDS[cfg.command]
    try:
        return handler(cfg)

    except (ValidationError, MeshParseError, MeshInvariantError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    except (OutputError, FileNotFoundError, PermissionError) as e:
        logger.error(f"Output error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    except (NonConvergenceError, EllipticityError, InitializationError) as e:
        logger.error(f"Solve failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE

    except BaseSolverException as e:
        logger.error(f"Solver error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
