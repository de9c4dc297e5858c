"""P2 function spaces: DOF maps, finite element functions, interpolation and evaluation."""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from src.core.exceptions import DimensionMismatchError
from src.services.elements import P2, to_barycentric
from src.services.mesh import Mesh
from src.services.quadrature import QuadratureRule, triangle_rule

ScalarField = Callable[[np.ndarray, np.ndarray], Union[np.ndarray, float]]


class SpaceKind(str, Enum):
    """V carries homogeneous Dirichlet structure, W is unconstrained."""

    V = "V"
    W = "W"


@dataclass(frozen=True, eq=False)
class DofMap:
    """
    Global numbering of P2 DOFs.

    Vertex DOFs come first (same index as the vertex), followed by one DOF per
    edge midpoint (vertex count + edge index). V and W share this numbering and
    differ only in which DOFs are free.
    """

    mesh: Mesh
    kind: SpaceKind
    cell_dofs: np.ndarray
    coordinates: np.ndarray
    boundary_dofs: np.ndarray

    @property
    def num_dofs(self) -> int:
        return int(self.coordinates.shape[0])

    @cached_property
    def interior_dofs(self) -> np.ndarray:
        mask = np.ones(self.num_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.nonzero(mask)[0]

    @property
    def free_dofs(self) -> np.ndarray:
        if self.kind is SpaceKind.V:
            return self.interior_dofs
        return np.arange(self.num_dofs)

    def same_mesh(self, other: "DofMap") -> bool:
        return self.mesh is other.mesh or self.mesh.equals(other.mesh)


def build_dofmap(mesh: Mesh, kind: Union[SpaceKind, str] = SpaceKind.W) -> DofMap:
    """Number vertex and edge-midpoint DOFs of the P2 space on ``mesh``."""
    kind = SpaceKind(kind)
    nv = mesh.num_vertices

    cell_dofs = np.hstack([mesh.cells, nv + mesh.cell_edges])
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    coordinates = np.vstack([mesh.vertices, midpoints])

    boundary = np.union1d(np.unique(mesh.boundary_edges), nv + mesh.boundary_edge_indices)
    return DofMap(
        mesh=mesh,
        kind=kind,
        cell_dofs=cell_dofs,
        coordinates=coordinates,
        boundary_dofs=boundary,
    )


def quadrature_points(mesh: Mesh, rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """Physical quadrature points (NC, nq, 2)."""
    rule = rule or triangle_rule()
    origin = mesh.vertices[mesh.cells[:, 0]]
    return origin[:, None, :] + np.einsum("cik,qk->cqi", mesh.jacobians, rule.reference_points)


def basis_values(rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """Basis values (nq, 6) at the rule's points."""
    rule = rule or triangle_rule()
    return P2.values(rule.points)


def basis_gradients(mesh: Mesh, rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """Physical basis gradients (NC, nq, 6, 2), pushed forward by the inverse-transpose Jacobian."""
    rule = rule or triangle_rule()
    reference = P2.gradients(rule.points)
    return np.einsum("cik,qbi->cqbk", mesh.inverse_jacobians, reference)


@dataclass(eq=False)
class FEFunction:
    """Coefficient vector over a P2 DOF map."""

    dofmap: DofMap
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.dofmap.num_dofs,):
            raise DimensionMismatchError(
                f"Coefficient vector has shape {self.coefficients.shape}, "
                f"DOF map has {self.dofmap.num_dofs} DOFs"
            )

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    def cell_coefficients(self) -> np.ndarray:
        return self.coefficients[self.dofmap.cell_dofs]

    def values_at(self, rule: Optional[QuadratureRule] = None) -> np.ndarray:
        """Values (NC, nq) at the quadrature points of every cell."""
        return np.einsum("qb,cb->cq", basis_values(rule), self.cell_coefficients())

    def gradients_at(self, rule: Optional[QuadratureRule] = None) -> np.ndarray:
        """Gradients (NC, nq, 2) at the quadrature points of every cell."""
        return np.einsum("cqbk,cb->cqk", basis_gradients(self.mesh, rule), self.cell_coefficients())

    def copy(self) -> "FEFunction":
        return FEFunction(self.dofmap, self.coefficients.copy())

    def _check_compatible(self, other: "FEFunction") -> None:
        if other.dofmap.num_dofs != self.dofmap.num_dofs or not self.dofmap.same_mesh(other.dofmap):
            raise DimensionMismatchError("FEFunctions live on different spaces")

    def __add__(self, other: "FEFunction") -> "FEFunction":
        self._check_compatible(other)
        return FEFunction(self.dofmap, self.coefficients + other.coefficients)

    def __sub__(self, other: "FEFunction") -> "FEFunction":
        self._check_compatible(other)
        return FEFunction(self.dofmap, self.coefficients - other.coefficients)

    def __mul__(self, scalar: float) -> "FEFunction":
        return FEFunction(self.dofmap, float(scalar) * self.coefficients)

    __rmul__ = __mul__


def interpolate(f: Union[ScalarField, float], dofmap: DofMap) -> FEFunction:
    """Nodal interpolant: coefficients are ``f`` at the DOF coordinates."""
    x, y = dofmap.coordinates.T
    values = f(x, y) if callable(f) else f
    values = np.broadcast_to(np.asarray(values, dtype=float), (dofmap.num_dofs,)).copy()
    return FEFunction(dofmap, values)


def map_to_physical(mesh: Mesh, cell: int, point: np.ndarray) -> np.ndarray:
    """Image of a reference point under the affine map of ``cell``."""
    return mesh.vertices[mesh.cells[cell, 0]] + mesh.jacobians[cell] @ np.asarray(point, dtype=float)


def evaluate(u: FEFunction, cell: int, point: np.ndarray) -> float:
    """Value of ``u`` at reference point ``point`` of ``cell``."""
    phi = P2.values(to_barycentric(point)[None, :])[0]
    return float(phi @ u.coefficients[u.dofmap.cell_dofs[cell]])


def evaluate_gradient(u: FEFunction, cell: int, point: np.ndarray) -> np.ndarray:
    """Physical gradient of ``u`` at reference point ``point`` of ``cell``."""
    reference = P2.gradients(to_barycentric(point)[None, :])[0]
    physical = reference @ u.mesh.inverse_jacobians[cell]
    return u.coefficients[u.dofmap.cell_dofs[cell]] @ physical
