"""Linear nonvariational finite element solver for A : D^2 u + b . grad u = f with Dirichlet data."""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.sparse import bmat, csr_matrix

from src.core.exceptions import DimensionMismatchError, EllipticityError, SingularMatrixError
from src.services.assembly import BasisData, assemble_generic, assemble_vector, cell_basis
from src.services.function_space import DofMap, FEFunction, SpaceKind, build_dofmap, interpolate
from src.services.hessian import HessianField, hessian_operator
from src.services.mesh import Mesh
from src.services.quadrature import QuadratureRule
from src.services.sparse_solver import solve_sparse

logger = logging.getLogger(__name__)

# A constant, a vectorized callable (x, y) -> values, or an (NC, nq) table
CoefficientField = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray]


def evaluate_field(field: CoefficientField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample a coefficient field at points with the shape of ``x``."""
    if callable(field):
        values = field(x, y)
    else:
        values = field
    values = np.asarray(values, dtype=float)
    try:
        return np.broadcast_to(values, x.shape)
    except ValueError as e:
        raise DimensionMismatchError(
            f"Coefficient table of shape {values.shape} does not match quadrature shape {x.shape}"
        ) from e


def _is_zero(field: CoefficientField) -> bool:
    return not callable(field) and np.ndim(field) == 0 and float(field) == 0.0


@dataclass
class LinearNVProblem:
    """
    Linear problem A : D^2 u + b . grad u = f in the square, u = g on its boundary.

    A is symmetric and stored by its entries a11, a12, a22.
    """

    a11: CoefficientField = 1.0
    a12: CoefficientField = 0.0
    a22: CoefficientField = 1.0
    b1: CoefficientField = 0.0
    b2: CoefficientField = 0.0
    f: CoefficientField = 0.0
    g: Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]] = 0.0
    name: str = "linear"

    @property
    def has_advection(self) -> bool:
        return not (_is_zero(self.b1) and _is_zero(self.b2))


@dataclass(eq=False)
class BlockSystem:
    """
    Monolithic system over the unknowns [U interior | H11 | H12 | H22].

    Row groups: the PDE tested with interior V functions, then the three
    Hessian definitions tested with all of W.
    """

    matrix: csr_matrix
    rhs: np.ndarray
    lift: np.ndarray
    interior: np.ndarray
    num_dofs: int

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Full U coefficients (lift included) and the (NDOF, 3) Hessian coefficients."""
        n_int = self.interior.size
        u = self.lift.copy()
        u[self.interior] = x[:n_int]
        h = x[n_int:].reshape(3, self.num_dofs).T
        return u, h

    def residual(self, x: np.ndarray) -> float:
        """Relative residual ||Kx - r|| / (||K|| ||x|| + ||r||) in the max norm."""
        r = self.matrix @ x - self.rhs
        k_norm = float(np.abs(self.matrix).sum(axis=1).max())
        scale = k_norm * np.max(np.abs(x)) + np.max(np.abs(self.rhs))
        return float(np.max(np.abs(r)) / scale) if scale > 0 else 0.0


def _weighted_mass_kernel(field: CoefficientField, scale: float = 1.0):
    def kernel(basis: BasisData) -> np.ndarray:
        a = scale * evaluate_field(field, basis.x, basis.y)
        return a[:, :, None, None] * basis.value[:, :, :, None] * basis.value[:, :, None, :]

    return kernel


def _advection_kernel(b1: CoefficientField, b2: CoefficientField):
    def kernel(basis: BasisData) -> np.ndarray:
        b = np.stack([evaluate_field(b1, basis.x, basis.y), evaluate_field(b2, basis.x, basis.y)], axis=-1)
        transport = np.einsum("cqbk,cqk->cqb", basis.grad, b)
        return basis.value[:, :, :, None] * transport[:, :, None, :]

    return kernel


class NonvariationalSolver:
    """
    Assembles and solves linear nonvariational problems on one mesh.

    The mass matrix, the Hessian blocks and their factorization come from the
    Hessian operator cached for this mesh and rule, so repeated solves (one
    per Newton step) only reassemble the coefficient blocks.
    """

    def __init__(self, mesh: Mesh, rule: Optional[QuadratureRule] = None):
        self.mesh = mesh
        self.rule = rule
        self.hessian = hessian_operator(mesh, rule)
        self.W: DofMap = self.hessian.space
        self.V: DofMap = build_dofmap(mesh, SpaceKind.V)

    def quadrature_points(self) -> Tuple[np.ndarray, np.ndarray]:
        basis = cell_basis(self.mesh, self.rule)
        return basis.x, basis.y

    def assemble(self, problem: LinearNVProblem) -> BlockSystem:
        V, W = self.V, self.W
        interior = V.interior_dofs
        M = self.hessian.mass

        lift = np.zeros(V.num_dofs)
        boundary = V.boundary_dofs
        lift[boundary] = interpolate(problem.g, V).coefficients[boundary]

        # Coefficient blocks, tested with all of W and restricted to interior rows below
        P = [
            assemble_generic(_weighted_mass_kernel(problem.a11), W, V, self.rule),
            assemble_generic(_weighted_mass_kernel(problem.a12, 2.0), W, V, self.rule),
            assemble_generic(_weighted_mass_kernel(problem.a22), W, V, self.rule),
        ]

        x, y = self.quadrature_points()
        load = assemble_vector(evaluate_field(problem.f, x, y), V, self.rule)
        if problem.has_advection:
            C = assemble_generic(_advection_kernel(problem.b1, problem.b2), V, V, self.rule)
            load = load - C @ lift
            C_ii = C[interior][:, interior]
        else:
            C_ii = None

        B_int = [B[:, interior] for B in self.hessian.blocks]
        blocks = [
            [C_ii, P[0][interior], P[1][interior], P[2][interior]],
            [-B_int[0], M, None, None],
            [-B_int[1], None, M, None],
            [-B_int[2], None, None, M],
        ]
        if C_ii is None:
            blocks[0][0] = csr_matrix((interior.size, interior.size))

        matrix = bmat(blocks, format="csr")
        rhs = np.concatenate([load[interior]] + [B @ lift for B in self.hessian.blocks])

        logger.debug(f"Assembled block system of size {matrix.shape[0]} with {matrix.nnz} nonzeros")
        return BlockSystem(matrix=matrix, rhs=rhs, lift=lift, interior=interior, num_dofs=W.num_dofs)

    def solve(self, problem: LinearNVProblem) -> Tuple[FEFunction, HessianField]:
        """
        Solve the block system of ``problem``.

        Raises:
            EllipticityError: If the system is singular, which for Newton steps
                means the cofactor coefficient lost definiteness
        """
        start = time.time()
        system = self.assemble(problem)
        try:
            x = solve_sparse(system.matrix, system.rhs)
        except SingularMatrixError as e:
            raise EllipticityError(f"Nonvariational system for '{problem.name}' is singular: {e}") from e

        u, h = system.split(x)
        U = FEFunction(self.V, u)
        H = HessianField(*(FEFunction(self.W, h[:, k].copy()) for k in range(3)))
        logger.debug(f"Solved '{problem.name}' ({system.size} unknowns) in {time.time() - start:.2f}s")
        return U, H


def assemble_block_system(
    problem: LinearNVProblem,
    mesh: Mesh,
    dofmaps: Optional[Tuple[DofMap, DofMap]] = None,
) -> BlockSystem:
    """Block system of ``problem`` on ``mesh``; ``dofmaps`` (V, W) must live on ``mesh``."""
    if dofmaps is not None:
        for dm in dofmaps:
            if dm.mesh is not mesh and not dm.mesh.equals(mesh):
                raise DimensionMismatchError("DOF maps are defined on a different mesh")
    return NonvariationalSolver(mesh).assemble(problem)


def solve_nonvariational(problem: LinearNVProblem, mesh: Mesh) -> Tuple[FEFunction, HessianField]:
    """Solve ``problem`` on ``mesh`` and return U with its finite element Hessian."""
    return NonvariationalSolver(mesh).solve(problem)
