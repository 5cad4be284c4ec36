"""Exception types raised by the catlab modules."""


class CatlabError(Exception):
    """Base class for all catlab errors."""


class ConfigError(CatlabError):
    """An experiment configuration failed validation."""


class SetTouchesOrigin(CatlabError):
    """A failure set has no positive distance-from-origin certificate."""


class NonInvertibleTransform(CatlabError):
    """A set-query transform is singular or numerically near-singular."""


class NotAbsolutelySummable(CatlabError):
    """Coefficient norms do not have a finite sum."""


class SingularAggregate(CatlabError):
    """The summed coefficient matrix is singular (excluded model class)."""


class AllocationBudgetExceeded(CatlabError):
    """A simulation would allocate more noise storage than the configured cap."""


class AcceptanceTooRare(CatlabError):
    """Rejection conditioning is infeasible or ran out of its attempt budget."""

    def __init__(self, message, acceptance_estimate=None, attempts=None):
        super().__init__(message)
        self.acceptance_estimate = acceptance_estimate
        self.attempts = attempts


class NoAtomReachesFailureSet(CatlabError):
    """No spectral atom direction can place a single noise vector in the target set."""


class ZeroDenominator(CatlabError):
    """A ratio estimator's denominator is indistinguishable from zero."""


class ScanRangeTooShort(CatlabError):
    """A stored window-sum range does not cover the requested cluster scan."""


class WindowTooShort(CatlabError):
    """A stored noise window does not cover the requested extraction range."""


class EmptySample(CatlabError):
    """A statistic was requested on an empty or too-small sample."""


class EmptyResult(CatlabError):
    """A report was requested for an empty row collection."""
