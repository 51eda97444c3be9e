"""
Enumerations for the Steklov fractional solver
"""
from enum import Enum


class MethodTag(str, Enum):
    """Solution methods selectable from a run configuration."""

    METHOD1 = "method1"          # sinc quadrature of the integral representation
    METHOD2 = "method2"          # pseudo-parabolic time stepping
    SPECTRAL = "spectral"        # dense Steklov eigen-decomposition (oracle)
    DIRICHLET = "dirichlet"      # limiting case alpha = 0
    NEUMANN = "neumann"          # limiting case alpha = 1


# Methods that need 0 < alpha < 1
FRACTIONAL_METHODS = {MethodTag.METHOD1, MethodTag.METHOD2, MethodTag.SPECTRAL}


class GridLevel(str, Enum):
    """Named quarter-disk grids (coarse generator output and its refinements)."""

    COARSE = "coarse"
    MEDIUM = "medium"
    FINE = "fine"


class ReferenceKind(str, Enum):
    """How the reference solution of an error record was obtained."""

    SPECTRAL = "spectral"
    FINEST = "finest"
