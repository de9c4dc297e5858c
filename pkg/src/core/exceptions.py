"""Custom exceptions for the nonvariational finite element solver."""

from typing import Any, Optional


class BaseSolverException(Exception):
    """Base exception for solver-specific errors."""
    pass


class ValidationError(BaseSolverException):
    """Raised when a parameter or configuration value is invalid."""
    pass


class UnknownProblemError(ValidationError):
    """Raised when a manufactured problem or coefficient case name is not recognized."""
    pass


class MeshParseError(BaseSolverException):
    """Raised when a mesh file cannot be parsed."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class MeshInvariantError(BaseSolverException):
    """Raised when a mesh violates conformity, orientation or coverage."""
    pass


class DimensionMismatchError(BaseSolverException):
    """Raised when operands of an assembly or solve have incompatible sizes."""
    pass


class SingularMatrixError(BaseSolverException):
    """Raised when a sparse factorization meets a vanishing pivot."""
    pass


class EllipticityError(SingularMatrixError):
    """Raised when a linearized nonvariational system cannot be solved."""

    def __init__(self, message: str, trace: Optional[Any] = None) -> None:
        super().__init__(message)
        self.trace = trace


class InitializationError(BaseSolverException):
    """Raised when no finite element convex initial guess could be built."""
    pass


class NonConvergenceError(BaseSolverException):
    """Raised when the Newton iteration stops without meeting its tolerance."""

    def __init__(self, message: str, trace: Optional[Any] = None, table: Optional[Any] = None) -> None:
        super().__init__(message)
        self.trace = trace
        self.table = table


class OutputError(BaseSolverException):
    """Raised when result files cannot be written."""
    pass
