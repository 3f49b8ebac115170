"""Exception hierarchy shared by all philab modules.

The CLI maps these onto exit codes: usage/config problems exit 2,
numeric and solver failures exit 3.
"""


class PhilabError(Exception):
    """Base class for every error raised by philab."""


class UsageError(PhilabError, ValueError):
    """Bad arguments, empty grids, malformed configuration."""


class DomainError(UsageError):
    """Argument outside the domain of a growth function (t < 0, nan, ...)."""


class AssumptionViolation(UsageError):
    """Growth exponents violate a structural hypothesis (e.g. p <= 2n/(n+2))."""


class SingularityError(PhilabError, ArithmeticError):
    """Quantity is undefined at the requested point (unshifted Hessian at 0)."""


class NumericError(PhilabError, ArithmeticError):
    """Non-finite intermediate or singular linear solve."""


class ConvergenceFailure(NumericError):
    """Newton iteration exhausted its budget.

    ``history`` holds the residual norm of every accepted iterate.
    """

    def __init__(self, message, history=(), time_index=None):
        super().__init__(message)
        self.history = list(history)
        self.time_index = time_index


class FitDegenerateError(NumericError):
    """Fewer than two usable points for a log-log fit."""
