"""Quadratic Lagrange reference element on the triangle."""

import numpy as np


class ReferenceElementP2:
    """
    P2 Lagrange element on the reference triangle (0, 0), (1, 0), (0, 1).

    Local DOFs 0-2 sit at the vertices and 3-5 at the midpoints of the local
    edges (0, 1), (1, 2), (2, 0). Points are given in barycentric coordinates
    (lambda0, lambda1, lambda2) = (1 - xi - eta, xi, eta).
    """

    num_basis = 6

    nodes = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ])

    # Reference gradients of the barycentric coordinates
    barycentric_gradients = np.array([
        [-1.0, -1.0],
        [1.0, 0.0],
        [0.0, 1.0],
    ])

    # Four linear sub-triangles over the six nodes, used for plotting
    sub_triangles = np.array([
        [0, 3, 5],
        [3, 1, 4],
        [5, 4, 2],
        [3, 4, 5],
    ])

    def values(self, bary: np.ndarray) -> np.ndarray:
        """Basis values (nq, 6) at barycentric points (nq, 3)."""
        l0, l1, l2 = np.atleast_2d(bary).T
        return np.column_stack([
            l0 * (2.0 * l0 - 1.0),
            l1 * (2.0 * l1 - 1.0),
            l2 * (2.0 * l2 - 1.0),
            4.0 * l0 * l1,
            4.0 * l1 * l2,
            4.0 * l2 * l0,
        ])

    def gradients(self, bary: np.ndarray) -> np.ndarray:
        """Reference gradients (nq, 6, 2) at barycentric points (nq, 3)."""
        lam = np.atleast_2d(bary)
        g = self.barycentric_gradients
        l0, l1, l2 = (lam[:, k, None] for k in range(3))
        return np.stack([
            (4.0 * l0 - 1.0) * g[0],
            (4.0 * l1 - 1.0) * g[1],
            (4.0 * l2 - 1.0) * g[2],
            4.0 * (l1 * g[0] + l0 * g[1]),
            4.0 * (l2 * g[1] + l1 * g[2]),
            4.0 * (l0 * g[2] + l2 * g[0]),
        ], axis=1)


def to_barycentric(reference_points: np.ndarray) -> np.ndarray:
    """Convert reference coordinates (..., 2) to barycentric (..., 3)."""
    p = np.asarray(reference_points, dtype=float)
    return np.concatenate([1.0 - p.sum(axis=-1, keepdims=True), p], axis=-1)


P2 = ReferenceElementP2()
