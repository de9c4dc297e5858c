"""Element-loop assembly of sparse matrices and load vectors over P2 spaces."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from src.core.exceptions import DimensionMismatchError
from src.services.elements import P2
from src.services.function_space import DofMap, basis_gradients, quadrature_points
from src.services.mesh import LOCAL_EDGES, Mesh
from src.services.quadrature import QuadratureRule, edge_rule, triangle_rule

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BasisData:
    """
    Basis tables on a batch of integration sites.

    A site is a cell (volume integrals) or a boundary edge (surface integrals).
    ``cells`` maps each site to the cell whose six DOFs it couples.

    Attributes:
        cells: (S,) owning cell of each site
        value: (S, nq, 6) basis values
        grad: (S, nq, 6, 2) physical basis gradients
        points: (S, nq, 2) physical quadrature points
        weights: (S, nq) quadrature weights including the measure of the site
        normals: (S, nq, 2) outward unit normals, boundary sites only
    """

    cells: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: Optional[np.ndarray] = None

    @property
    def x(self) -> np.ndarray:
        return self.points[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[..., 1]


# kernel(basis) -> (S, nq, 6 test, 6 trial)
BilinearKernel = Callable[[BasisData], np.ndarray]


def cell_basis(mesh: Mesh, rule: Optional[QuadratureRule] = None) -> BasisData:
    """Basis tables at the triangle quadrature points of every cell."""
    rule = rule or triangle_rule()
    nc = mesh.num_cells
    value = np.broadcast_to(P2.values(rule.points), (nc, rule.num_points, 6))
    weights = np.abs(mesh.jacobian_determinants)[:, None] * rule.weights[None, :]
    return BasisData(
        cells=np.arange(nc),
        value=value,
        grad=basis_gradients(mesh, rule),
        points=quadrature_points(mesh, rule),
        weights=weights,
    )


def boundary_basis(mesh: Mesh, rule: Optional[QuadratureRule] = None) -> BasisData:
    """Basis tables of the parent cells at the edge quadrature points of every boundary edge."""
    rule = rule or edge_rule()
    t = rule.points
    nq = rule.num_points

    # Barycentric points along each local edge, traversed in cell orientation
    bary = np.zeros((3, nq, 3))
    for local, (a, b) in enumerate(LOCAL_EDGES):
        bary[local, :, a] = 1.0 - t
        bary[local, :, b] = t

    ref_values = np.stack([P2.values(bary[k]) for k in range(3)])
    ref_grads = np.stack([P2.gradients(bary[k]) for k in range(3)])

    cells = mesh.boundary_cells
    local = mesh.boundary_local_edges
    grad = np.einsum("sik,sqbi->sqbk", mesh.inverse_jacobians[cells], ref_grads[local])

    start = mesh.vertices[mesh.boundary_edges[:, 0]]
    stop = mesh.vertices[mesh.boundary_edges[:, 1]]
    points = start[:, None, :] + t[None, :, None] * (stop - start)[:, None, :]

    nb = mesh.num_boundary_edges
    return BasisData(
        cells=cells,
        value=ref_values[local],
        grad=grad,
        points=points,
        weights=mesh.boundary_edge_lengths[:, None] * rule.weights[None, :],
        normals=np.broadcast_to(mesh.boundary_normals[:, None, :], (nb, nq, 2)),
    )


def _check_spaces(trial: DofMap, test: DofMap) -> None:
    if not trial.same_mesh(test):
        raise DimensionMismatchError("Trial and test spaces are defined on different meshes")


def _scatter(local: np.ndarray, cells: np.ndarray, trial: DofMap, test: DofMap) -> csr_matrix:
    rows = np.broadcast_to(test.cell_dofs[cells][:, :, None], local.shape)
    cols = np.broadcast_to(trial.cell_dofs[cells][:, None, :], local.shape)
    matrix = coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(test.num_dofs, trial.num_dofs),
    ).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


def _integrate(kernel: BilinearKernel, basis: BasisData) -> np.ndarray:
    values = np.asarray(kernel(basis), dtype=float)
    expected = basis.weights.shape + (6, 6)
    try:
        values = np.broadcast_to(values, expected)
    except ValueError as e:
        raise DimensionMismatchError(
            f"Kernel returned shape {values.shape}, expected {expected}"
        ) from e
    return np.einsum("sq,sqab->sab", basis.weights, values)


def assemble_generic(
    kernel: BilinearKernel,
    trial: DofMap,
    test: DofMap,
    rule: Optional[QuadratureRule] = None,
) -> csr_matrix:
    """
    Assemble the volume bilinear form whose integrand is ``kernel``.

    Entry (a, b) is the sum over cells and quadrature points of
    weight * kernel[test basis a, trial basis b].

    Raises:
        DimensionMismatchError: If the spaces differ in mesh or the kernel's
            output shape is wrong
    """
    _check_spaces(trial, test)
    basis = cell_basis(trial.mesh, rule)
    matrix = _scatter(_integrate(kernel, basis), basis.cells, trial, test)
    logger.debug(f"Assembled volume matrix {matrix.shape} with {matrix.nnz} nonzeros")
    return matrix


def assemble_boundary(
    kernel: BilinearKernel,
    trial: DofMap,
    test: DofMap,
    rule: Optional[QuadratureRule] = None,
) -> csr_matrix:
    """Assemble a bilinear form integrated over the boundary edges only."""
    _check_spaces(trial, test)
    basis = boundary_basis(trial.mesh, rule)
    matrix = _scatter(_integrate(kernel, basis), basis.cells, trial, test)
    logger.debug(f"Assembled boundary matrix {matrix.shape} with {matrix.nnz} nonzeros")
    return matrix


def mass_kernel(basis: BasisData) -> np.ndarray:
    return basis.value[:, :, :, None] * basis.value[:, :, None, :]


def stiffness_kernel(basis: BasisData) -> np.ndarray:
    return np.einsum("sqak,sqbk->sqab", basis.grad, basis.grad)


def assemble_mass_matrix(dofmap: DofMap, rule: Optional[QuadratureRule] = None) -> csr_matrix:
    """Mass matrix of the P2 space."""
    return assemble_generic(mass_kernel, dofmap, dofmap, rule)


def assemble_vector(
    integrand: np.ndarray,
    test: DofMap,
    rule: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """
    Load vector with entries the integral of ``integrand`` against each test basis function.

    Args:
        integrand: (NC, nq) values at the triangle quadrature points
        test: Test space
        rule: Triangle rule the values were sampled on

    Returns:
        np.ndarray: (NDOF,) load vector
    """
    basis = cell_basis(test.mesh, rule)
    integrand = np.broadcast_to(np.asarray(integrand, dtype=float), basis.weights.shape)
    local = np.einsum("cq,cq,cqa->ca", basis.weights, integrand, basis.value)
    return np.bincount(test.cell_dofs.ravel(), weights=local.ravel(), minlength=test.num_dofs)
