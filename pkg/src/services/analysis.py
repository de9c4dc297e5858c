"""Manufactured problems, error norms and experimental orders of convergence."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.api.models import NORMS, ConvergenceTable, ErrorRecord, NewtonConfig, NewtonTrace, SweepRecord
from src.core.exceptions import (
    EllipticityError,
    InitializationError,
    NonConvergenceError,
    UnknownProblemError,
    ValidationError,
)
from src.services.assembly import cell_basis
from src.services.function_space import FEFunction, build_dofmap, interpolate
from src.services.hessian import HessianField, check_fe_convexity, fe_hessian
from src.services.ma_newton import GaussCurvatureProblem, newton_solve
from src.services.mesh import Mesh, mesh_size, refine_uniform
from src.services.nvfem_linear import LinearNVProblem, solve_nonvariational
from src.services.quadrature import QuadratureRule

logger = logging.getLogger(__name__)

LevelCallback = Callable[[int, Mesh, FEFunction, HessianField, Optional[NewtonTrace]], None]


def _outer(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.stack([np.stack([x * x, x * y], axis=-1), np.stack([x * y, y * y], axis=-1)], axis=-2)


def _identity_like(x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(2), np.shape(x) + (2, 2))


def _quartic(half_width: float) -> GaussCurvatureProblem:
    def u(x, y):
        return (x ** 2 + y ** 2) ** 2

    def grad(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        r2 = x ** 2 + y ** 2
        return 4.0 * r2[..., None] * np.stack([x, y], axis=-1)

    def hess(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        r2 = x ** 2 + y ** 2
        return 4.0 * r2[..., None, None] * _identity_like(x) + 8.0 * _outer(x, y)

    def K(x, y):
        r2 = x ** 2 + y ** 2
        return 48.0 * r2 ** 2 / (1.0 + 16.0 * r2 ** 3) ** 2

    return GaussCurvatureProblem(
        curvature=K, boundary_data=u, name="quartic",
        exact_solution=u, exact_gradient=grad, exact_hessian=hess,
        xmin=-half_width, xmax=half_width,
    )


def _exponential(half_width: float) -> GaussCurvatureProblem:
    def u(x, y):
        return np.exp(0.5 * (x ** 2 + y ** 2))

    def grad(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return u(x, y)[..., None] * np.stack([x, y], axis=-1)

    def hess(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return u(x, y)[..., None, None] * (_identity_like(x) + _outer(x, y))

    def K(x, y):
        r2 = x ** 2 + y ** 2
        e = np.exp(r2)
        return e * (1.0 + r2) / (1.0 + e * r2) ** 2

    return GaussCurvatureProblem(
        curvature=K, boundary_data=u, name="exponential",
        exact_solution=u, exact_gradient=grad, exact_hessian=hess,
        xmin=-half_width, xmax=half_width,
    )


def _sphere(half_width: float) -> GaussCurvatureProblem:
    # Lower spherical cap of radius sqrt(2) centred at (0, 0, 1)
    if 2.0 * half_width ** 2 >= 2.0:
        raise ValidationError(f"Sphere problem needs half_width < 1, got {half_width}")

    def s(x, y):
        return np.sqrt(2.0 - x ** 2 - y ** 2)

    def u(x, y):
        return 1.0 - s(x, y)

    def grad(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return np.stack([x, y], axis=-1) / s(x, y)[..., None]

    def hess(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        root = s(x, y)[..., None, None]
        return _identity_like(x) / root + _outer(x, y) / root ** 3

    return GaussCurvatureProblem(
        curvature=0.5, boundary_data=u, name="sphere",
        exact_solution=u, exact_gradient=grad, exact_hessian=hess,
        xmin=-half_width, xmax=half_width,
    )


MANUFACTURED_PROBLEMS: Dict[str, Callable[[float], GaussCurvatureProblem]] = {
    "quartic": _quartic,
    "exponential": _exponential,
    "sphere": _sphere,
}


def manufactured_problem(name: str, half_width: float = 0.5) -> GaussCurvatureProblem:
    """
    Gauss curvature problem with a known convex solution.

    Raises:
        UnknownProblemError: If ``name`` is not a known problem
    """
    try:
        factory = MANUFACTURED_PROBLEMS[name]
    except KeyError:
        raise UnknownProblemError(
            f"Unknown manufactured problem '{name}', expected one of {sorted(MANUFACTURED_PROBLEMS)}"
        ) from None
    return factory(half_width)


def constant_curvature_problem(K: float, half_width: float = 0.57) -> GaussCurvatureProblem:
    """Constant curvature K with zero boundary data."""
    return GaussCurvatureProblem(
        curvature=float(K), boundary_data=0.0, name=f"K={K:g}",
        xmin=-half_width, xmax=half_width,
    )


def _sample(mesh: Mesh, rule: Optional[QuadratureRule]):
    basis = cell_basis(mesh, rule)
    return basis.x, basis.y, basis.weights


def error_l2(U: FEFunction, u_exact: Callable, rule: Optional[QuadratureRule] = None) -> float:
    """||u - U|| in L2."""
    x, y, w = _sample(U.mesh, rule)
    diff = u_exact(x, y) - U.values_at(rule)
    return float(np.sqrt(np.sum(w * diff ** 2)))


def error_h1_semi(U: FEFunction, grad_exact: Callable, rule: Optional[QuadratureRule] = None) -> float:
    """|u - U| in the H1 seminorm."""
    x, y, w = _sample(U.mesh, rule)
    diff = grad_exact(x, y) - U.gradients_at(rule)
    return float(np.sqrt(np.sum(w * np.sum(diff ** 2, axis=-1))))


def error_hessian(H: HessianField, hess_exact: Callable, rule: Optional[QuadratureRule] = None) -> float:
    """L2 norm of the Frobenius distance between D^2 u and H (off-diagonal counted twice)."""
    x, y, w = _sample(H.dofmap.mesh, rule)
    diff = hess_exact(x, y) - H.matrix_at(rule)
    return float(np.sqrt(np.sum(w * np.sum(diff ** 2, axis=(-2, -1)))))


def eoc_rates(errors: Sequence[float], sizes: Sequence[float]) -> List[float]:
    """
    Pairwise rates log(e_k / e_{k+1}) / log(h_k / h_{k+1}).

    An exact hit (zero error at the finer level) is reported as +inf.
    """
    if len(errors) != len(sizes):
        raise ValidationError(f"{len(errors)} errors but {len(sizes)} mesh sizes")
    if len(errors) < 2:
        raise ValidationError("At least two records are needed for a convergence rate")

    rates = []
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(sizes, sizes[1:])):
        if e1 == 0.0:
            rates.append(math.inf)
        elif e0 == 0.0:
            rates.append(-math.inf)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


def eoc(table: ConvergenceTable) -> Dict[str, List[float]]:
    """Rates of every norm in ``table``; also stored on the table."""
    table.rates = {norm: eoc_rates(table.errors(norm), table.sizes) for norm in NORMS}
    return table.rates


def _record(level: int, mesh: Mesh, U: FEFunction, H: HessianField, exact, iterations: int) -> ErrorRecord:
    u, grad, hess = exact
    return ErrorRecord(
        level=level,
        h=mesh_size(mesh),
        ndof=U.dofmap.num_dofs,
        err_l2=error_l2(U, u),
        err_h1=error_h1_semi(U, grad),
        err_h2=error_hessian(H, hess),
        newton_iters=iterations,
    )


def _levels(base_mesh: Mesh, levels: int):
    mesh = base_mesh
    for level in range(levels):
        if level > 0:
            mesh = refine_uniform(mesh)
        yield level, mesh


def run_convergence_study(
    problem: GaussCurvatureProblem,
    base_mesh: Mesh,
    levels: int,
    config: Optional[NewtonConfig] = None,
    on_level: Optional[LevelCallback] = None,
) -> ConvergenceTable:
    """
    Newton solves on ``levels`` uniformly refined meshes with errors and rates.

    Level k uses the base mesh refined k times.

    Raises:
        ValidationError: If fewer than 2 levels or no exact solution
        NonConvergenceError: If a level fails; the table of completed levels is attached
    """
    if levels < 2:
        raise ValidationError(f"A convergence study needs at least 2 levels, got {levels}")
    if not problem.has_exact_solution:
        raise ValidationError(f"Problem '{problem.name}' has no exact solution")

    exact = (problem.exact_solution, problem.exact_gradient, problem.exact_hessian)
    table = ConvergenceTable(problem=problem.name)

    for level, mesh in _levels(base_mesh, levels):
        logger.info(f"[{problem.name}] level {level}: {mesh.num_cells} cells")
        try:
            U, H, trace = newton_solve(problem, mesh, config)
        except (NonConvergenceError, EllipticityError, InitializationError) as e:
            if len(table.records) >= 2:
                eoc(table)
            trace = getattr(e, "trace", None)
            raise NonConvergenceError(f"Level {level}: {e}", trace=trace, table=table) from e

        table.records.append(_record(level, mesh, U, H, exact, trace.num_iterations))
        if on_level is not None:
            on_level(level, mesh, U, H, trace)

    eoc(table)
    return table


def interpolation_errors(problem: GaussCurvatureProblem, mesh: Mesh, level: int = 0) -> ErrorRecord:
    """Errors of the nodal interpolant of the exact solution, the baseline for solver errors."""
    if not problem.has_exact_solution:
        raise ValidationError(f"Problem '{problem.name}' has no exact solution")
    U = interpolate(problem.exact_solution, build_dofmap(mesh))
    exact = (problem.exact_solution, problem.exact_gradient, problem.exact_hessian)
    return _record(level, mesh, U, fe_hessian(U), exact, 0)


SweepCallback = Callable[[float, FEFunction, HessianField, NewtonTrace], None]


def run_curvature_sweep(
    k_values: Sequence[float],
    mesh: Mesh,
    half_width: float = 0.57,
    config: Optional[NewtonConfig] = None,
    continuation: bool = True,
    on_converged: Optional[SweepCallback] = None,
) -> List[SweepRecord]:
    """
    Constant-curvature solves with g = 0 in increasing K on one mesh.

    With ``continuation`` each K starts from the last converged solution of a
    smaller K instead of the initial guess. A K that fails becomes a
    ``converged=False`` record and the sweep carries on.
    """
    config = config or NewtonConfig()
    records: List[SweepRecord] = []
    start = None

    for K in sorted(k_values):
        problem = constant_curvature_problem(K, half_width)
        try:
            U, H, trace = newton_solve(problem, mesh, config, start)
        except (NonConvergenceError, EllipticityError, InitializationError) as e:
            trace = getattr(e, "trace", None)
            logger.warning(f"K = {K:g}: {e}")
            records.append(SweepRecord(
                K=K,
                converged=False,
                iterations=trace.num_iterations if trace is not None else 0,
                message=str(e),
            ))
            continue

        if continuation:
            start = (U, H)
        records.append(SweepRecord(
            K=K,
            converged=True,
            iterations=trace.num_iterations,
            min_u=float(U.coefficients.min()),
            min_eig_H=check_fe_convexity(H, config.convexity_tol).min_eigenvalue,
        ))
        if on_converged is not None:
            on_converged(K, U, H, trace)

    return records


@dataclass
class LinearCase:
    """Linear nonvariational problem with its exact solution."""

    problem: LinearNVProblem
    exact_solution: Callable
    exact_gradient: Callable
    exact_hessian: Callable


def _trig_solution(half_width: float):
    k = math.pi / (2.0 * half_width)

    def u(x, y):
        return np.sin(k * (x + half_width)) * np.sin(k * (y + half_width))

    def grad(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        sx, sy = np.sin(k * (x + half_width)), np.sin(k * (y + half_width))
        cx, cy = np.cos(k * (x + half_width)), np.cos(k * (y + half_width))
        return k * np.stack([cx * sy, sx * cy], axis=-1)

    def hess(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        sx, sy = np.sin(k * (x + half_width)), np.sin(k * (y + half_width))
        cx, cy = np.cos(k * (x + half_width)), np.cos(k * (y + half_width))
        return k ** 2 * np.stack(
            [np.stack([-sx * sy, cx * cy], axis=-1), np.stack([cx * cy, -sx * sy], axis=-1)], axis=-2
        )

    return u, grad, hess


def _quadratic_solution():
    def u(x, y):
        return x ** 2 + x * y

    def grad(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return np.stack([2.0 * x + y, x], axis=-1)

    def hess(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return np.broadcast_to(np.array([[2.0, 1.0], [1.0, 0.0]]), np.shape(x) + (2, 2))

    return u, grad, hess


def linear_case(name: str, half_width: float = 0.5) -> LinearCase:
    """
    Built-in linear test cases.

    identity: A = I with a sine product vanishing on the boundary.
    constant-spd: A = [[2, 1], [1, 2]] with u = x^2 + xy, reproduced exactly.
    manufactured: A = [[2, sgn(xy)], [sgn(xy), 2]], discontinuous across the axes.
    """
    if name == "identity":
        u, grad, hess = _trig_solution(half_width)
        problem = LinearNVProblem(
            f=lambda x, y: np.trace(hess(x, y), axis1=-2, axis2=-1), g=0.0, name=name
        )
    elif name == "constant-spd":
        u, grad, hess = _quadratic_solution()
        problem = LinearNVProblem(a11=2.0, a12=1.0, a22=2.0, f=6.0, g=u, name=name)
    elif name == "manufactured":
        u, grad, hess = _trig_solution(half_width)

        def sign(x, y):
            return np.sign(x * y)

        def f(x, y):
            D = hess(x, y)
            return 2.0 * D[..., 0, 0] + 2.0 * sign(x, y) * D[..., 0, 1] + 2.0 * D[..., 1, 1]

        problem = LinearNVProblem(a11=2.0, a12=sign, a22=2.0, f=f, g=0.0, name=name)
    else:
        raise UnknownProblemError(
            f"Unknown coefficient case '{name}', expected identity, constant-spd or manufactured"
        )
    return LinearCase(problem=problem, exact_solution=u, exact_gradient=grad, exact_hessian=hess)


def run_linear_study(
    case: LinearCase,
    base_mesh: Mesh,
    levels: int,
    on_level: Optional[LevelCallback] = None,
) -> ConvergenceTable:
    """Linear nonvariational solves over refined meshes, with errors and rates."""
    if levels < 1:
        raise ValidationError(f"Need at least one level, got {levels}")

    exact = (case.exact_solution, case.exact_gradient, case.exact_hessian)
    table = ConvergenceTable(problem=case.problem.name)
    for level, mesh in _levels(base_mesh, levels):
        U, H = solve_nonvariational(case.problem, mesh)
        table.records.append(_record(level, mesh, U, H, exact, 0))
        if on_level is not None:
            on_level(level, mesh, U, H, None)

    if len(table.records) >= 2:
        eoc(table)
    return table
