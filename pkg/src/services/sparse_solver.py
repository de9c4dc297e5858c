"""Direct sparse solves with pivot and residual checks."""

import logging
from typing import Optional

import numpy as np
from scipy.sparse import csc_matrix, spmatrix
from scipy.sparse.linalg import splu

from src.core.config import settings
from src.core.exceptions import DimensionMismatchError, SingularMatrixError

logger = logging.getLogger(__name__)


def _inf_norm(A: spmatrix) -> float:
    return float(np.abs(A).sum(axis=1).max()) if A.nnz else 0.0


def _relative_residual(A: spmatrix, x: np.ndarray, b: np.ndarray, a_norm: float) -> float:
    r = A @ x - b
    scale = a_norm * np.max(np.abs(x), initial=0.0) + np.max(np.abs(b), initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(r), initial=0.0) / scale)


class SparseLU:
    """
    Reusable LU factorization (SuperLU with partial pivoting).

    Raises SingularMatrixError on construction when a pivot of U falls below
    ``pivot_tol`` relative to the largest pivot.
    """

    def __init__(self, A: spmatrix, pivot_tol: Optional[float] = None, residual_tol: Optional[float] = None):
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatchError(f"Matrix must be square, got shape {A.shape}")

        self.matrix = csc_matrix(A, dtype=float)
        self.pivot_tol = settings.PIVOT_TOL if pivot_tol is None else pivot_tol
        self.residual_tol = settings.RESIDUAL_TOL if residual_tol is None else residual_tol
        self.norm = _inf_norm(self.matrix)

        if self.matrix.shape[0] == 0:
            self._lu = None
            return

        try:
            self._lu = splu(self.matrix, diag_pivot_thresh=1.0)
        except RuntimeError as e:
            raise SingularMatrixError(f"Factorization failed: {e}") from e

        pivots = np.abs(self._lu.U.diagonal())
        largest = pivots.max(initial=0.0)
        if largest == 0.0 or pivots.min() < self.pivot_tol * largest:
            raise SingularMatrixError(
                f"Pivot {pivots.min():.3e} below {self.pivot_tol:g} relative to {largest:.3e}"
            )

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for a vector or a (n, k) block of right-hand sides."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.matrix.shape[0]:
            raise DimensionMismatchError(
                f"Right-hand side has {b.shape[0]} rows, matrix has {self.matrix.shape[0]}"
            )
        if self._lu is None:
            return np.zeros_like(b)

        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("Solve produced non-finite values")

        columns = [(x, b)] if b.ndim == 1 else [(x[:, k], b[:, k]) for k in range(b.shape[1])]
        for k, (xk, bk) in enumerate(columns):
            residual = _relative_residual(self.matrix, xk, bk, self.norm)
            if residual <= self.residual_tol:
                continue

            # One step of iterative refinement
            xk += self._lu.solve(bk - self.matrix @ xk)
            residual = _relative_residual(self.matrix, xk, bk, self.norm)
            if residual > self.residual_tol:
                logger.warning(
                    f"Relative residual {residual:.3e} exceeds {self.residual_tol:g} "
                    f"after refinement (column {k})"
                )
        return x


def factorize(A: spmatrix) -> SparseLU:
    """Factorize ``A`` once for repeated solves."""
    return SparseLU(A)


def solve_sparse(A: spmatrix, b: np.ndarray) -> np.ndarray:
    """
    Solve A x = b by direct sparse factorization.

    Raises:
        DimensionMismatchError: If A is not square or b does not match
        SingularMatrixError: If a pivot vanishes
    """
    return SparseLU(A).solve(b)
