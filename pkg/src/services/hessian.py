"""Finite element Hessian of C0 P2 functions and the finite element convexity check."""

import logging
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix

from src.api.models import ConvexityReport
from src.core.exceptions import DimensionMismatchError, ValidationError
from src.services.assembly import BasisData, assemble_boundary, assemble_generic, assemble_mass_matrix
from src.services.function_space import (
    DofMap,
    FEFunction,
    SpaceKind,
    build_dofmap,
    quadrature_points,
)
from src.services.mesh import Mesh
from src.services.quadrature import QuadratureRule, triangle_rule
from src.services.sparse_solver import SparseLU, factorize

logger = logging.getLogger(__name__)

# Upper-triangular slots stored by a HessianField
SLOTS: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 1), (1, 1))


@dataclass(eq=False)
class HessianField:
    """Components H11, H12, H22 of a symmetric matrix field in W."""

    h11: FEFunction
    h12: FEFunction
    h22: FEFunction

    def __post_init__(self) -> None:
        dm = self.h11.dofmap
        for comp in (self.h12, self.h22):
            if comp.dofmap is not dm and not (
                comp.dofmap.num_dofs == dm.num_dofs and comp.dofmap.same_mesh(dm)
            ):
                raise DimensionMismatchError("Hessian components must share one DOF map")

    @property
    def dofmap(self) -> DofMap:
        return self.h11.dofmap

    @property
    def components(self) -> Tuple[FEFunction, FEFunction, FEFunction]:
        return self.h11, self.h12, self.h22

    def matrix_at(self, rule: Optional[QuadratureRule] = None) -> np.ndarray:
        """Full symmetric matrices (NC, nq, 2, 2) at the quadrature points."""
        a, b, c = (comp.values_at(rule) for comp in self.components)
        return np.stack([np.stack([a, b], axis=-1), np.stack([b, c], axis=-1)], axis=-2)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(comp.coefficients)) for comp in self.components))

    # The finite element Hessian is linear in U, so these commute with fe_hessian
    def __add__(self, other: "HessianField") -> "HessianField":
        return HessianField(*(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "HessianField") -> "HessianField":
        return HessianField(*(a - b for a, b in zip(self.components, other.components)))

    def __mul__(self, scalar: float) -> "HessianField":
        return HessianField(*(scalar * comp for comp in self.components))

    __rmul__ = __mul__


def _hessian_kernels(i: int, j: int):
    # Test index a, trial index b
    def volume(basis: BasisData) -> np.ndarray:
        return -basis.grad[:, :, :, None, j] * basis.grad[:, :, None, :, i]

    def boundary(basis: BasisData) -> np.ndarray:
        flux = basis.grad[:, :, None, :, i] * basis.normals[:, :, None, None, j]
        return basis.value[:, :, :, None] * flux

    return volume, boundary


def assemble_hessian_block(
    trial: DofMap,
    test: DofMap,
    i: int,
    j: int,
    rule: Optional[QuadratureRule] = None,
) -> csr_matrix:
    """
    Distributional Hessian block of slot (i, j), 0-based.

    (B u)_a = -int d_i u d_j phi_a + int_{boundary} d_i u n_j phi_a
    """
    volume, boundary = _hessian_kernels(i, j)
    return assemble_generic(volume, trial, test, rule) + assemble_boundary(boundary, trial, test)


def assemble_hessian_blocks(
    trial: DofMap,
    test: DofMap,
    rule: Optional[QuadratureRule] = None,
) -> Tuple[csr_matrix, csr_matrix, csr_matrix]:
    """Blocks B11, B12, B22 for the stored upper-triangular slots."""
    return tuple(assemble_hessian_block(trial, test, i, j, rule) for i, j in SLOTS)


class FiniteElementHessian:
    """
    Finite element Hessian operator on one mesh.

    The mass matrix of W is factorized once; each Hessian then costs three
    block products and one multi-column back substitution.
    """

    def __init__(self, mesh: Mesh, rule: Optional[QuadratureRule] = None):
        self.mesh = mesh
        self.rule = rule
        self.space = build_dofmap(mesh, SpaceKind.W)
        self.mass = assemble_mass_matrix(self.space, rule)
        self.blocks = assemble_hessian_blocks(self.space, self.space, rule)
        self._mass_lu: SparseLU = factorize(self.mass)
        logger.debug(f"Finite element Hessian ready on {mesh.num_cells} cells, {self.space.num_dofs} DOFs")

    def __call__(self, u: FEFunction) -> HessianField:
        if u.dofmap.num_dofs != self.space.num_dofs or not u.dofmap.same_mesh(self.space):
            raise DimensionMismatchError("Function and Hessian operator live on different meshes")

        rhs = np.column_stack([B @ u.coefficients for B in self.blocks])
        h = self._mass_lu.solve(rhs)
        return HessianField(*(FEFunction(self.space, h[:, k].copy()) for k in range(3)))

    def project_slot(self, u: FEFunction, i: int, j: int) -> FEFunction:
        """Hessian component of an arbitrary slot (i, j), including the lower one."""
        B = assemble_hessian_block(u.dofmap, self.space, i, j, self.rule)
        return FEFunction(self.space, self._mass_lu.solve(B @ u.coefficients))


_operators: Dict[Tuple[int, int], FiniteElementHessian] = {}
_operators_lock = threading.Lock()


def hessian_operator(mesh: Mesh, rule: Optional[QuadratureRule] = None) -> FiniteElementHessian:
    """Cached operator per mesh object and quadrature rule; only the latest mesh is kept."""
    rule = rule or triangle_rule()
    key = (id(mesh), id(rule))
    with _operators_lock:
        op = _operators.get(key)
        if op is None or op.mesh is not mesh or op.rule is not rule:
            stale = [k for k, cached in _operators.items() if cached.mesh is not mesh]
            for k in stale:
                del _operators[k]
            op = FiniteElementHessian(mesh, rule)
            _operators[key] = op
    return op


def fe_hessian(u: FEFunction, rule: Optional[QuadratureRule] = None) -> HessianField:
    """Finite element Hessian of ``u``: M h_ij = B_ij u for each stored slot."""
    return hessian_operator(u.mesh, rule)(u)


def symmetric_min_eigenvalue(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of [[a, b], [b, c]], elementwise."""
    return 0.5 * (a + c) - np.sqrt((0.5 * (a - c)) ** 2 + b ** 2)


def check_fe_convexity(
    H: HessianField,
    tol: float = 0.0,
    rule: Optional[QuadratureRule] = None,
    cells: Optional[np.ndarray] = None,
) -> ConvexityReport:
    """
    Pointwise convexity check at every quadrature point of every cell.

    The field counts as finite element convex when its smallest eigenvalue is
    at least ``-tol`` everywhere sampled. ``cells`` restricts the sampling to a
    subset of cells; the reported cell index stays global.
    """
    rule = rule or triangle_rule()
    a, b, c = (comp.values_at(rule) for comp in H.components)
    eig = symmetric_min_eigenvalue(a, b, c)
    index = np.arange(eig.shape[0]) if cells is None else np.asarray(cells, dtype=int)
    if index.size == 0:
        raise ValidationError("Convexity check needs at least one cell")

    local, q = np.unravel_index(int(np.argmin(eig[index])), (index.size, eig.shape[1]))
    cell = int(index[local])
    lowest = float(eig[cell, q])
    point = quadrature_points(H.dofmap.mesh, rule)[cell, q]

    return ConvexityReport(
        convex=bool(lowest >= -tol),
        min_eigenvalue=lowest,
        location=(float(point[0]), float(point[1])),
        cell=cell,
        tolerance=float(tol),
    )
