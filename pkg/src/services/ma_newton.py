"""Newton's method for the prescribed Gauss curvature equation det D^2 u = K (1 + |grad u|^2)^2."""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from src.api.models import NewtonConfig, NewtonIterate, NewtonTrace
from src.core.exceptions import (
    EllipticityError,
    InitializationError,
    NonConvergenceError,
    ValidationError,
)
from src.services.assembly import assemble_vector
from src.services.function_space import FEFunction, interpolate, quadrature_points
from src.services.hessian import HessianField, check_fe_convexity, fe_hessian
from src.services.mesh import Mesh, interior_cells
from src.services.nvfem_linear import LinearNVProblem, NonvariationalSolver, evaluate_field
from src.services.quadrature import QuadratureRule, triangle_rule

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

# (d + 2) for d = 2
GRADIENT_COEFFICIENT = 4.0


@dataclass
class GaussCurvatureProblem:
    """
    Prescribed Gauss curvature K on the square [xmin, xmax]^2 with Dirichlet data g.

    ``exact_gradient`` returns (..., 2) arrays and ``exact_hessian`` (..., 2, 2)
    arrays; they are only needed for error studies.
    """

    curvature: Union[float, ScalarFunction]
    boundary_data: Union[float, ScalarFunction] = 0.0
    name: str = "gauss-curvature"
    exact_solution: Optional[ScalarFunction] = None
    exact_gradient: Optional[VectorFunction] = None
    exact_hessian: Optional[VectorFunction] = None
    xmin: float = -0.5
    xmax: float = 0.5

    def __post_init__(self) -> None:
        if not callable(self.curvature) and not float(self.curvature) > 0:
            raise ValidationError(f"Curvature must be positive, got K = {self.curvature}")
        if not self.xmax > self.xmin:
            raise ValidationError(f"Empty domain [{self.xmin}, {self.xmax}]")

    @property
    def has_exact_solution(self) -> bool:
        return None not in (self.exact_solution, self.exact_gradient, self.exact_hessian)

    def curvature_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return evaluate_field(self.curvature, x, y)

    def validate_on(self, mesh: Mesh, rule: Optional[QuadratureRule] = None) -> None:
        """Check K > 0 at every quadrature point of ``mesh``."""
        points = quadrature_points(mesh, rule)
        k = self.curvature_at(points[..., 0], points[..., 1])
        if not np.all(np.isfinite(k)) or np.min(k) <= 0:
            raise ValidationError(
                f"Curvature of '{self.name}' must be positive and finite at all quadrature points "
                f"(min {np.min(k):.3e})"
            )


def cofactor_2x2(H: np.ndarray) -> np.ndarray:
    """cof [[a, b], [b, c]] = [[c, -b], [-b, a]] over the last two axes."""
    H = np.asarray(H, dtype=float)
    cof = np.empty_like(H)
    cof[..., 0, 0] = H[..., 1, 1]
    cof[..., 0, 1] = -H[..., 0, 1]
    cof[..., 1, 0] = -H[..., 1, 0]
    cof[..., 1, 1] = H[..., 0, 0]
    return cof


def frobenius(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A : B = trace(A^T B) over the last two axes."""
    return np.sum(np.asarray(A) * np.asarray(B), axis=(-2, -1))


def determinant_2x2(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]


def residual_density(H: np.ndarray, grad: np.ndarray, K: Union[float, np.ndarray]) -> np.ndarray:
    """det H - K (1 + |grad|^2)^2."""
    q = 1.0 + np.sum(np.asarray(grad, dtype=float) ** 2, axis=-1)
    return determinant_2x2(H) - np.asarray(K) * q ** 2


def linearization_coefficients(
    H: np.ndarray,
    grad: np.ndarray,
    K: Union[float, np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coefficients (A, b) of the derivative of the residual density at (H, grad).

    The derivative in direction (dH, dgrad) is A : dH + b . dgrad with
    A = cof H and b = -4 K (1 + |grad|^2) grad.
    """
    grad = np.asarray(grad, dtype=float)
    q = 1.0 + np.sum(grad ** 2, axis=-1)
    b = -GRADIENT_COEFFICIENT * (np.asarray(K) * q)[..., None] * grad
    return cofactor_2x2(H), b


def gateaux_derivative(
    H: np.ndarray,
    grad: np.ndarray,
    K: Union[float, np.ndarray],
    dH: np.ndarray,
    dgrad: np.ndarray,
) -> np.ndarray:
    """Directional derivative of ``residual_density`` at (H, grad) in direction (dH, dgrad)."""
    A, b = linearization_coefficients(H, grad, K)
    return frobenius(A, dH) + np.sum(b * np.asarray(dgrad), axis=-1)


def newton_coefficients(
    H_prev: HessianField,
    U_prev: FEFunction,
    problem: GaussCurvatureProblem,
    rule: Optional[QuadratureRule] = None,
    convexity_tol: float = 0.0,
) -> LinearNVProblem:
    """
    Linear problem of one Newton step, in the unknown new iterate.

    cof H_prev : H + b . grad U = cof H_prev : H_prev + b . grad U_prev - F(H_prev, grad U_prev)
    with all coefficients sampled at the quadrature points.
    """
    rule = rule or triangle_rule()
    report = check_fe_convexity(H_prev, convexity_tol, rule)
    if not report.convex:
        logger.warning(
            f"Newton linearization at a non-convex iterate: min eigenvalue {report.min_eigenvalue:.3e} "
            f"at ({report.location[0]:.4f}, {report.location[1]:.4f})"
        )

    Hq = H_prev.matrix_at(rule)
    p = U_prev.gradients_at(rule)
    points = quadrature_points(U_prev.mesh, rule)
    K = problem.curvature_at(points[..., 0], points[..., 1])

    A, b = linearization_coefficients(Hq, p, K)
    f = frobenius(A, Hq) + np.sum(b * p, axis=-1) - residual_density(Hq, p, K)

    return LinearNVProblem(
        a11=A[..., 0, 0],
        a12=A[..., 0, 1],
        a22=A[..., 1, 1],
        b1=b[..., 0],
        b2=b[..., 1],
        f=f,
        g=problem.boundary_data,
        name=f"{problem.name}-newton",
    )


def weak_residual(
    U: FEFunction,
    H: HessianField,
    problem: GaussCurvatureProblem,
    rule: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """Integrals of F(H, grad U) against every interior V basis function."""
    rule = rule or triangle_rule()
    points = quadrature_points(U.mesh, rule)
    K = problem.curvature_at(points[..., 0], points[..., 1])
    density = residual_density(H.matrix_at(rule), U.gradients_at(rule), K)
    load = assemble_vector(density, U.dofmap, rule)
    return load[U.dofmap.interior_dofs]


def _modified_curvature(problem: GaussCurvatureProblem, solver: NonvariationalSolver, rule: QuadratureRule) -> np.ndarray:
    # K (1 + |grad G|^2)^2 with G the nodal interpolant of g
    G = interpolate(problem.boundary_data, solver.W)
    q = 1.0 + np.sum(G.gradients_at(rule) ** 2, axis=-1)
    points = quadrature_points(solver.mesh, rule)
    return problem.curvature_at(points[..., 0], points[..., 1]) * q ** 2


def _lifted_paraboloid(problem: GaussCurvatureProblem, solver: NonvariationalSolver, scale: float) -> FEFunction:
    # g on the boundary DOFs; inside, a paraboloid shifted to lie below g along the boundary
    V = solver.V
    x, y = V.coordinates.T
    x0, x1, y0, y1 = solver.mesh.bounds
    bowl = 0.5 * scale * ((x - 0.5 * (x0 + x1)) ** 2 + (y - 0.5 * (y0 + y1)) ** 2)
    lift = interpolate(problem.boundary_data, V).coefficients

    boundary = V.boundary_dofs
    values = bowl + np.min(lift[boundary] - bowl[boundary])
    values[boundary] = lift[boundary]
    return FEFunction(V, values)


def _initial_guess(
    problem: GaussCurvatureProblem,
    solver: NonvariationalSolver,
    convexity_tol: float,
    rule: QuadratureRule,
) -> Tuple[FEFunction, HessianField, str, float]:
    """
    Poisson candidate first, then the lifted paraboloid.

    Convexity is judged on ``interior_cells`` only. When neither candidate
    passes, the first finite one is used and the failed check is only logged.
    """
    k_bar = _modified_curvature(problem, solver, rule)
    cells = interior_cells(solver.mesh)
    candidates = []

    poisson = LinearNVProblem(f=2.0 * np.sqrt(k_bar), g=problem.boundary_data, name=f"{problem.name}-init")
    try:
        U, H = solver.solve(poisson)
        candidates.append(("poisson", U, H))
    except EllipticityError as e:
        logger.warning(f"Poisson initial guess failed: {e}")

    U = _lifted_paraboloid(problem, solver, float(np.sqrt(np.min(k_bar))))
    candidates.append(("paraboloid", U, fe_hessian(U, rule)))

    finite = []
    for source, U, H in candidates:
        if not (np.all(np.isfinite(U.coefficients)) and np.isfinite(H.max_abs())):
            logger.warning(f"{source.capitalize()} initial guess is not finite")
            continue
        report = check_fe_convexity(H, convexity_tol * max(1.0, H.max_abs()), rule, cells)
        if report.convex:
            logger.info(f"Initial guess from {source}, min eigenvalue {report.min_eigenvalue:.3e}")
            return U, H, source, report.min_eigenvalue
        logger.warning(
            f"{source.capitalize()} initial guess is not convex away from the boundary "
            f"(min eigenvalue {report.min_eigenvalue:.3e} at "
            f"({report.location[0]:.4f}, {report.location[1]:.4f}))"
        )
        finite.append((source, U, H, report.min_eigenvalue))

    if not finite:
        raise InitializationError(f"No finite initial guess for '{problem.name}'")

    source, U, H, min_eig = finite[0]
    logger.warning(f"Continuing from the non-convex {source} initial guess")
    return U, H, source, min_eig


def initial_guess(
    problem: GaussCurvatureProblem,
    mesh: Mesh,
    convexity_tol: Optional[float] = None,
) -> Tuple[FEFunction, HessianField]:
    """
    Starting iterate: the solution of Laplace u = 2 sqrt(K_bar) with data g,
    or a paraboloid lifted onto g when that solution is not finite element
    convex away from the boundary. If neither passes, the Poisson solution is
    used anyway.

    Raises:
        InitializationError: If no candidate is finite
    """
    tol = NewtonConfig().convexity_tol if convexity_tol is None else convexity_tol
    rule = triangle_rule()
    problem.validate_on(mesh, rule)
    U, H, _, _ = _initial_guess(problem, NonvariationalSolver(mesh), tol, rule)
    return U, H


def merit(U: FEFunction, H: HessianField, problem: GaussCurvatureProblem, rule: Optional[QuadratureRule] = None) -> float:
    """Half the squared Euclidean norm of the weak residual."""
    r = weak_residual(U, H, problem, rule)
    return 0.5 * float(r @ r)


@dataclass
class NewtonStep:
    """Accepted update of one Newton step."""

    U: FEFunction
    H: HessianField
    step_length: float
    newton_norm: float


class NewtonSolver:
    """
    Newton iteration over the monolithic nonvariational system on one mesh.

    Each step solves the linearized block system for the full Newton update and
    then backtracks along it (Armijo rule on half the squared weak residual)
    unless ``config.line_search`` is off. Iterates keep H = fe_hessian(U), so
    a partial step combines the Hessians linearly.
    """

    def __init__(self, problem: GaussCurvatureProblem, mesh: Mesh, config: Optional[NewtonConfig] = None):
        self.problem = problem
        self.mesh = mesh
        self.config = config or NewtonConfig()
        self.rule = triangle_rule()
        self.linear_solver = NonvariationalSolver(mesh, self.rule)

    def step(self, U: FEFunction, H: HessianField) -> NewtonStep:
        """One Newton step from (U, H)."""
        cfg = self.config
        linear = newton_coefficients(H, U, self.problem, self.rule, cfg.convexity_tol)
        U_full, H_full = self.linear_solver.solve(linear)
        dU, dH = U_full - U, H_full - H
        norm = float(np.max(np.abs(dU.coefficients)))

        if norm <= cfg.tol or not np.isfinite(norm):
            return NewtonStep(U_full, H_full, 1.0, norm)
        if not cfg.line_search:
            alpha = cfg.damping
            return NewtonStep(U + alpha * dU, H + alpha * dH, alpha, norm)
        return self._line_search(U, H, dU, dH, norm)

    def _line_search(
        self,
        U: FEFunction,
        H: HessianField,
        dU: FEFunction,
        dH: HessianField,
        norm: float,
    ) -> NewtonStep:
        # The Newton direction has slope -2 phi0 for phi = |R|^2 / 2
        cfg = self.config
        phi0 = merit(U, H, self.problem, self.rule)
        alpha = cfg.damping
        best_alpha, best_phi = 0.0, phi0

        for _ in range(cfg.ls_max_iter):
            U_t, H_t = U + alpha * dU, H + alpha * dH
            phi = merit(U_t, H_t, self.problem, self.rule)
            if np.isfinite(phi) and phi < best_phi:
                best_alpha, best_phi = alpha, phi
            if phi <= (1.0 - 2.0 * cfg.ls_c1 * alpha) * phi0:
                if alpha < cfg.damping:
                    logger.debug(f"[{self.problem.name}] Armijo search accepted alpha = {alpha:.2e}")
                return NewtonStep(U_t, H_t, alpha, norm)
            alpha *= cfg.ls_reduction

        if best_alpha > 0.0:
            logger.info(f"[{self.problem.name}] Armijo search failed, using best-effort alpha = {best_alpha:.2e}")
            alpha = best_alpha
        else:
            # A zero step would look like convergence
            logger.warning(f"[{self.problem.name}] no step length reduces the residual, taking alpha = {cfg.damping:g}")
            alpha = cfg.damping
        return NewtonStep(U + alpha * dU, H + alpha * dH, alpha, norm)

    def solve(
        self,
        start: Optional[Tuple[FEFunction, HessianField]] = None,
    ) -> Tuple[FEFunction, HessianField, NewtonTrace]:
        """
        Iterate until the full Newton step changes no coefficient by more than ``config.tol``.

        Args:
            start: Optional (U, H) with H = fe_hessian(U) and U = g on the boundary,
                e.g. the solution of a nearby problem; defaults to the initial guess

        Raises:
            NonConvergenceError: On reaching ``max_iter``, on divergence or on
                non-finite iterates; the trace is attached
            EllipticityError: If a linearized system is singular; the trace is attached
            InitializationError: If no finite initial guess exists
            ValidationError: If ``start`` lives on another mesh
        """
        cfg = self.config
        self.problem.validate_on(self.mesh, self.rule)
        trace = NewtonTrace()

        if start is None:
            U, H, source, min_eig = _initial_guess(self.problem, self.linear_solver, cfg.convexity_tol, self.rule)
            trace.initializer = source
            trace.initial_min_eigenvalue = min_eig
        else:
            U, H = start
            if not U.dofmap.same_mesh(self.linear_solver.V):
                raise ValidationError(f"Starting iterate for '{self.problem.name}' lives on another mesh")
            trace.initializer = "given"
            trace.initial_min_eigenvalue = check_fe_convexity(H, cfg.convexity_tol, self.rule).min_eigenvalue

        smallest = np.inf
        for n in range(1, cfg.max_iter + 1):
            started = time.time()
            try:
                accepted = self.step(U, H)
            except EllipticityError as e:
                e.trace = trace
                logger.warning(f"Newton step {n} for '{self.problem.name}' hit a singular system")
                raise

            increment = float(np.max(np.abs(accepted.U.coefficients - U.coefficients)))
            residual = float(np.max(np.abs(weak_residual(accepted.U, accepted.H, self.problem, self.rule)), initial=0.0))
            report = check_fe_convexity(accepted.H, cfg.convexity_tol, self.rule)

            trace.iterations.append(
                NewtonIterate(
                    iteration=n,
                    increment=increment,
                    step_length=accepted.step_length,
                    residual=residual,
                    min_eigenvalue=report.min_eigenvalue,
                    convex=report.convex,
                    wall_time=time.time() - started,
                )
            )
            logger.info(
                f"[{self.problem.name}] iter {n}: increment {increment:.3e}, step {accepted.step_length:.3g}, "
                f"residual {residual:.3e}, min eig {report.min_eigenvalue:.3e}"
            )
            U, H = accepted.U, accepted.H

            if not np.isfinite(accepted.newton_norm) or not np.isfinite(residual):
                raise NonConvergenceError(
                    f"Newton for '{self.problem.name}' produced non-finite iterates at step {n}", trace=trace
                )

            if accepted.newton_norm <= cfg.tol:
                trace.converged = True
                logger.info(f"[{self.problem.name}] converged in {n} iterations")
                return U, H, trace

            if accepted.newton_norm > cfg.divergence_factor * smallest:
                raise NonConvergenceError(
                    f"Newton for '{self.problem.name}' diverges: step {accepted.newton_norm:.3e} at iteration {n} "
                    f"exceeds {cfg.divergence_factor:g} x smallest step {smallest:.3e}",
                    trace=trace,
                )
            smallest = min(smallest, accepted.newton_norm)

        raise NonConvergenceError(
            f"Newton for '{self.problem.name}' did not converge in {cfg.max_iter} iterations "
            f"(last increment {trace.increments[-1]:.3e})",
            trace=trace,
        )


def newton_solve(
    problem: GaussCurvatureProblem,
    mesh: Mesh,
    config: Optional[NewtonConfig] = None,
    start: Optional[Tuple[FEFunction, HessianField]] = None,
) -> Tuple[FEFunction, HessianField, NewtonTrace]:
    """Solve ``problem`` on ``mesh`` by Newton's method from ``start`` or the initial guess."""
    return NewtonSolver(problem, mesh, config).solve(start)
