"""Error hierarchy for the solver package."""
from typing import Optional


class SolverError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(SolverError, ValueError):
    """A numeric parameter is outside its admissible range."""


class MeshError(SolverError):
    pass


class MeshInvariantError(MeshError):
    """A triangulation violates a structural invariant."""


class ParseError(SolverError):
    """Malformed input file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshParseError(ParseError, MeshError):
    """Malformed mesh or nodal-value file."""


class MeshMismatchError(MeshError):
    """Two fields or a field and a matrix refer to different meshes."""


class AssemblyError(SolverError):
    pass


class ConfigurationError(SolverError):
    """The problem setup cannot be solved as configured (c ≡ 0, δ > λ̃₁, ...)."""


class NotSPDError(SolverError):
    """A matrix expected to be symmetric positive definite is not."""


class PreconditionerError(SolverError):
    """Jacobi preconditioner hit a zero or negative diagonal entry."""


class NonConvergenceError(SolverError):
    """An iterative method exhausted its iteration budget."""

    def __init__(self, message: str, iterations: int, residual: float,
                 node: Optional[int] = None):
        self.iterations = iterations
        self.residual = residual
        self.node = node
        super().__init__(message)


class EigenSolverError(SolverError):
    pass


class OracleSizeError(SolverError):
    """Dense spectral oracle requested on too many boundary nodes."""
