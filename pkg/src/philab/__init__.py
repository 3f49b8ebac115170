"""Numerical laboratory for parabolic systems with Orlicz growth."""
from .errors import (
    AssumptionViolation,
    ConvergenceFailure,
    DomainError,
    FitDegenerateError,
    NumericError,
    PhilabError,
    SingularityError,
    UsageError,
)
from .orlicz import Family, NFunction, ShiftedNFunction

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "ConvergenceFailure",
    "DomainError",
    "FitDegenerateError",
    "NumericError",
    "PhilabError",
    "SingularityError",
    "UsageError",
    "Family",
    "NFunction",
    "ShiftedNFunction",
]
