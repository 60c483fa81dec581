"""Exception hierarchy.

Each class carries the process exit code the command line maps it to:
2 for configuration problems, 3 for guard / precondition failures and
4 for numerical failures.
"""


class Q1dError(Exception):
    exit_code = 1


class ConfigError(Q1dError):
    exit_code = 2


class GuardError(Q1dError):
    """A documented precondition of an operation does not hold."""

    exit_code = 3


class DimensionError(GuardError):
    pass


class SizeError(GuardError):
    pass


class FrameError(GuardError):
    """Reference energy too close to (or outside) a band edge of the base."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BandError(GuardError):
    pass


class ConditionError(GuardError):
    pass


class CovarianceError(GuardError):
    pass


class StatisticalPowerError(GuardError):
    pass


class InsufficientDataError(GuardError):
    pass


class NumericError(Q1dError):
    exit_code = 4


class ConvergenceError(NumericError):
    pass


class DivergenceError(NumericError):
    pass


class ResolutionWarning(UserWarning):
    """Zero finding found a different number of roots than expected."""


class ResonanceWarning(UserWarning):
    """Critical angles are not chaotic; oscillatory sums do not average out."""
