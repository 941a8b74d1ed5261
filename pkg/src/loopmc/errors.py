"""Exception types raised by the estimators and file readers."""


class LoopMCError(Exception):
    """Base class for package errors."""


class SizeGuardError(LoopMCError, ValueError):
    """An exhaustive routine was asked to enumerate too large a space."""


class ModelFormatError(LoopMCError, ValueError):
    """A model or fixed-point file could not be parsed."""


class DegenerateMarginal(LoopMCError, ValueError):
    """Some BP marginal is 0 or 1, so loop weights are undefined."""


class SignCollapse(LoopMCError):
    """``|1 - 2 kappa|`` fell below the configured threshold.

    The offending report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NegativeSeries(LoopMCError):
    """The estimated loop series is negative; its logarithm is undefined."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
