"""Exception hierarchy shared by every module of the package."""


class DncImError(Exception):
    """Base class for all package errors."""


class DomainError(DncImError, ValueError):
    """An argument lies outside the domain of the operation."""


class NonMonotoneQuantile(DomainError):
    """g-and-k parameters whose quantile function is not strictly increasing."""


class QuadratureFailure(DncImError, ArithmeticError):
    """Numerical integration did not reach the requested accuracy."""


class OptimFailure(DncImError, ArithmeticError):
    """Likelihood maximization failed after the restart budget was spent."""


class NotPositiveDefinite(DncImError, ArithmeticError):
    """Observed information has an eigenvalue at or below the PD threshold."""


class SingularInformation(DncImError, ArithmeticError):
    """Total information is numerically singular."""


class SimulationBudgetExceeded(DncImError, RuntimeError):
    """Too many failed block summaries while drawing reference samples."""


class UnsupportedModel(DncImError, NotImplementedError):
    """The requested operation is not available for this model family."""


class EmptyHypothesis(DncImError, ValueError):
    """A hypothesis that contains no parameter values."""


class ConfigError(DncImError, ValueError):
    """Invalid experiment configuration."""


#: Failures a harness may count and skip instead of aborting.
SUMMARY_FAILURES = (OptimFailure, NotPositiveDefinite, NonMonotoneQuantile, QuadratureFailure)
