"""Quadrature rules on the reference triangle and the unit interval."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from src.core.config import settings
from src.core.exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Points and weights of a quadrature rule.

    Triangle rules store barycentric points (nq, 3) on the reference triangle
    with vertices (0, 0), (1, 0), (0, 1), whose weights sum to 1/2. Edge rules
    store abscissae (nq,) in [0, 1] with weights summing to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def num_points(self) -> int:
        return int(self.weights.shape[0])

    @property
    def reference_points(self) -> np.ndarray:
        """(nq, 2) reference coordinates (xi, eta) of a triangle rule."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def triangle_rule(order: Optional[int] = None) -> QuadratureRule:
    """
    Collapsed Gauss rule on the reference triangle.

    The square [0, 1]^2 is mapped onto the triangle by (u, v) -> (u, (1 - u) v).
    The Jacobian factor (1 - u) is absorbed into a Gauss-Jacobi rule in u, so
    ``order`` points per direction integrate polynomials of total degree
    ``2 * order - 1`` exactly.
    """
    n = settings.TRIANGLE_QUADRATURE_ORDER if order is None else order
    if n < 1:
        raise ValidationError(f"Quadrature order must be positive, got {n}")

    tu, wu = roots_jacobi(n, 1.0, 0.0)
    tv, wv = leggauss(n)
    u = 0.5 * (1.0 + tu)
    v = 0.5 * (1.0 + tv)

    uu, vv = np.meshgrid(u, v, indexing="ij")
    xi = uu.ravel()
    eta = ((1.0 - uu) * vv).ravel()
    weights = np.outer(wu, wv).ravel() / 8.0

    points = np.column_stack([1.0 - xi - eta, xi, eta])
    return QuadratureRule(points=points, weights=weights, degree=2 * n - 1)


@lru_cache(maxsize=None)
def edge_rule(num_points: Optional[int] = None) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact to degree ``2 * num_points - 1``."""
    n = settings.EDGE_QUADRATURE_POINTS if num_points is None else num_points
    if n < 1:
        raise ValidationError(f"Edge quadrature needs at least one point, got {n}")

    t, w = leggauss(n)
    return QuadratureRule(points=0.5 * (1.0 + t), weights=0.5 * w, degree=2 * n - 1)
