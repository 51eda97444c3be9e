"""
Models package for the fractional Steklov solver.
"""
from app.models.enums import FRACTIONAL_METHODS, GridLevel, MethodTag, ReferenceKind
from app.models.mesh import Mesh, NodalField
from app.models.problem import Coefficients, FractionalProblem, TimeSchemeParams
from app.models.report import ErrorRecord, SolveReport
from app.models.run_config import RunConfig

__all__ = [
    # Enums
    'FRACTIONAL_METHODS',
    'GridLevel',
    'MethodTag',
    'ReferenceKind',

    # Mesh
    'Mesh',
    'NodalField',

    # Problem
    'Coefficients',
    'FractionalProblem',
    'TimeSchemeParams',

    # Reports
    'ErrorRecord',
    'SolveReport',

    # Run configuration
    'RunConfig',
]
