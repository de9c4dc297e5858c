from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Dict, Optional, List, Literal, Tuple

from src.core.config import settings


class NewtonConfig(BaseModel):
    """Stopping rule and safeguards of the Newton iteration."""
    tol: float = Field(
        default=settings.NEWTON_TOL,
        gt=0,
        description="Stop when the max coefficient change between iterates is at most tol"
    )
    max_iter: int = Field(
        default=settings.NEWTON_MAX_ITER,
        ge=1,
        description="Maximum number of Newton steps"
    )
    convexity_tol: float = Field(
        default=settings.CONVEXITY_TOL,
        ge=0,
        description="Slack allowed below zero for the minimum Hessian eigenvalue"
    )
    damping: float = Field(
        default=1.0,
        gt=0,
        le=1,
        description="Step length alpha in U_n = U_{n-1} + alpha * (U_new - U_{n-1})"
    )
    divergence_factor: float = Field(
        default=settings.DIVERGENCE_FACTOR,
        gt=1,
        description="Declare divergence when a full Newton step exceeds this multiple of the smallest one"
    )
    line_search: bool = Field(
        default=True,
        description="Backtrack on the squared weak residual starting from the damping step"
    )
    ls_max_iter: int = Field(default=8, ge=1, description="Maximum number of trial step lengths")
    ls_reduction: float = Field(default=0.5, gt=0, lt=1, description="Step length factor per backtrack")
    ls_c1: float = Field(default=1e-4, gt=0, lt=0.5, description="Armijo sufficient decrease constant")


class NewtonIterate(BaseModel):
    """Diagnostics of one Newton step."""
    iteration: int = Field(..., ge=1)
    increment: float = Field(..., description="Max coefficient change from the previous iterate")
    step_length: float = Field(default=1.0, gt=0, le=1, description="Accepted fraction of the Newton step")
    residual: float = Field(..., description="Max magnitude of the weak residual over interior test functions")
    min_eigenvalue: float = Field(..., description="Smallest Hessian eigenvalue over quadrature points")
    convex: bool = Field(..., description="Whether the iterate passed the convexity check")
    wall_time: float = Field(..., ge=0, description="Seconds spent on the step")


class NewtonTrace(BaseModel):
    """Per-iteration record of a Newton solve."""
    iterations: List[NewtonIterate] = Field(default_factory=list)
    converged: bool = False
    initial_min_eigenvalue: Optional[float] = None
    initializer: Optional[str] = Field(default=None, description="'poisson', 'paraboloid' or 'given'")

    @property
    def num_iterations(self) -> int:
        return len(self.iterations)

    @property
    def increments(self) -> List[float]:
        return [it.increment for it in self.iterations]

    @property
    def min_eigenvalue(self) -> Optional[float]:
        return self.iterations[-1].min_eigenvalue if self.iterations else self.initial_min_eigenvalue


class ConvexityReport(BaseModel):
    """Outcome of the pointwise finite element convexity check."""
    convex: bool
    min_eigenvalue: float
    location: Tuple[float, float] = Field(..., description="Physical point of the minimum")
    cell: int = Field(..., ge=0)
    tolerance: float = Field(..., ge=0)


class ErrorRecord(BaseModel):
    """Errors of one refinement level."""
    level: int = Field(..., ge=0)
    h: float = Field(..., gt=0, description="Largest cell diameter")
    ndof: int = Field(..., ge=1)
    err_l2: float = Field(..., ge=0)
    err_h1: float = Field(..., ge=0)
    err_h2: float = Field(..., ge=0, description="Frobenius L2 error of the finite element Hessian")
    newton_iters: int = Field(default=0, ge=0)


NORMS = ("l2", "h1", "h2")


class ConvergenceTable(BaseModel):
    """Error records of a refinement study with pairwise convergence rates."""
    problem: str
    records: List[ErrorRecord] = Field(default_factory=list)
    rates: Dict[str, List[float]] = Field(default_factory=dict)

    def errors(self, norm: str) -> List[float]:
        return [getattr(r, f"err_{norm}") for r in self.records]

    @property
    def sizes(self) -> List[float]:
        return [r.h for r in self.records]


class SweepRecord(BaseModel):
    """Outcome of one constant-curvature solve."""
    K: float = Field(..., gt=0)
    converged: bool
    iterations: int = Field(..., ge=0)
    min_u: Optional[float] = None
    min_eig_H: Optional[float] = None
    message: Optional[str] = Field(default=None, description="Failure reason when not converged")


CommandKind = Literal["converge", "sweep", "solve-linear", "mesh-info"]

MANUFACTURED_NAMES = ("quartic", "exponential", "sphere")
LINEAR_CASES = ("identity", "constant-spd", "manufactured")


class RunConfig(BaseModel):
    """Validated configuration of one CLI run."""
    command: CommandKind
    half_width: float = Field(default=0.5, gt=0)
    n: int = Field(default=4, ge=1, le=512, description="Squares per side of the base mesh")
    perturb: float = Field(default=0.0, ge=0, lt=0.3)
    levels: int = Field(default=4, ge=1, le=8)
    problem: str = Field(default="quartic")
    k_values: List[float] = Field(default_factory=list)
    coefficient: str = Field(default="identity")
    tol: float = Field(default=settings.NEWTON_TOL, gt=0)
    max_iter: int = Field(default=settings.NEWTON_MAX_ITER, ge=1)
    damping: float = Field(default=1.0, gt=0, le=1)
    convexity_tol: float = Field(default=settings.CONVEXITY_TOL, ge=0)
    line_search: bool = Field(default=True)
    continuation: bool = Field(default=True, description="Seed each sweep K from the previous converged K")
    seed: int = Field(default=settings.MESH_SEED, ge=0)
    out_dir: str = Field(default=settings.OUTPUT_DIR, min_length=1)

    @field_validator("k_values")
    @classmethod
    def positive_curvatures(cls, values: List[float]) -> List[float]:
        for k in values:
            if not k > 0:
                raise ValueError(f"curvature values must be positive, got {k}")
        return values

    @model_validator(mode="after")
    def check_command(self) -> "RunConfig":
        if self.command == "converge":
            if self.levels < 2:
                raise ValueError("converge needs at least 2 levels to compute convergence rates")
            if self.problem not in MANUFACTURED_NAMES:
                raise ValueError(
                    f"converge needs a manufactured problem {MANUFACTURED_NAMES}, got '{self.problem}'"
                )
        elif self.command == "sweep":
            if self.problem != "constant-k":
                raise ValueError(f"sweep needs problem 'constant-k', got '{self.problem}'")
            if not self.k_values:
                raise ValueError("sweep needs at least one curvature value (--k)")
        elif self.command == "solve-linear":
            if self.coefficient not in LINEAR_CASES:
                raise ValueError(f"unknown coefficient case '{self.coefficient}', expected one of {LINEAR_CASES}")
        return self

    def newton(self) -> NewtonConfig:
        return NewtonConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            convexity_tol=self.convexity_tol,
            damping=self.damping,
            line_search=self.line_search,
        )

    def fingerprint_payload(self) -> Dict[str, object]:
        """Fields that determine the numerical outcome, for hashing."""
        return self.model_dump(exclude={"out_dir"})
