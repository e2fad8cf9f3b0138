"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so solver code should raise
the most specific class that applies.
"""


class ThincylError(Exception):
    """Base class for all package errors."""


class DomainError(ThincylError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GeometryError(ThincylError):
    """A geometry specification produced a degenerate or invalid mesh."""


class ConfigError(ThincylError):
    """A configuration file or boundary-condition assignment is invalid."""


class PreconditionError(ThincylError):
    """A documented precondition of an operation does not hold."""


class NumericError(ThincylError):
    """A non-finite value appeared where a finite one is required."""


class DegenerateSystemError(ThincylError):
    """Dirichlet elimination left no free degrees of freedom."""


class SingularMatrixError(ThincylError):
    """A factorization hit a zero or forbidden pivot."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(ThincylError):
    """An iterative solve stopped before reaching the requested tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class FitError(ThincylError):
    """A least-squares fit has too few usable points."""


class SweepError(ThincylError):
    """A parameter sweep aborted; completed records are preserved."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records if records is not None else []
