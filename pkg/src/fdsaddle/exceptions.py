"""Exception hierarchy for fdsaddle.

Every error raised by the library derives from :class:`FdsaddleError`, so
callers (in particular the CLI and the Monte Carlo harnesses) can catch the
whole family or a specific numerical condition.
"""


class FdsaddleError(Exception):
    """Base class for all fdsaddle errors."""


class InvalidParameter(FdsaddleError):
    """Parameter vector outside the valid region of the spectral model."""


class TooShort(FdsaddleError):
    """Time series too short for a frequency domain analysis (n < 8)."""


class NonConvergence(FdsaddleError):
    """An iterative solver exhausted its iteration budget.

    The partially converged result, when available, is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingularJacobian(FdsaddleError):
    """Score Jacobian numerically singular (condition number > 1e12)."""


class BoundaryHit(FdsaddleError):
    """No valid step exists inside the parameter region."""


class SingularCovariance(FdsaddleError):
    """Sandwich covariance matrix is not invertible."""


class SingularInformation(FdsaddleError):
    """Asymptotic information integral is rank deficient."""


class DomainViolation(FdsaddleError):
    """Tilting vector outside the convergence region of the exponential CGF."""


class Degenerate(FdsaddleError):
    """Tilted score Jacobian singular: scores lie in a proper subspace."""


class SingularTilt(FdsaddleError):
    """Tilted second-moment matrix not positive definite."""


class InfeasibleTilt(FdsaddleError):
    """No positive-weight empirical likelihood solution (outside the hull)."""


class DegenerateProposal(FdsaddleError):
    """Importance sampling proposal covariance cannot be factorized."""


class AllWeightsZero(FdsaddleError):
    """No importance sampling draw landed in the valid parameter region."""


class ParseError(FdsaddleError):
    """Malformed numeric input; carries the offending row (1-based)."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptySeries(FdsaddleError):
    """Ingestion produced no observations."""


class FormatError(FdsaddleError):
    """Flat file does not follow the expected fixed-width layout."""


class MissingYears(FdsaddleError):
    """Requested year range has gaps; carries the missing years."""

    def __init__(self, message, years=()):
        super().__init__(message)
        self.years = tuple(years)


class ConfigError(FdsaddleError):
    """Invalid run configuration."""
