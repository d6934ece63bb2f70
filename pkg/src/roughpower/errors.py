"""Exception hierarchy shared by all modules."""


class RoughPowerError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(RoughPowerError, ValueError):
    """Invalid parameters or exponent constraints."""


class NotClosed(RoughPowerError):
    """Three-index increment is not in the kernel of delta."""


class MuTooSmall(ConfigError):
    pass


class NotInC2Pi(RoughPowerError):
    """Two-index increment has a nonzero consecutive entry."""


class NoConvergence(RoughPowerError):
    pass


class RegularityBudget(ConfigError):
    """eta + gamma <= 1, the compensated sums need not converge."""


class OriginDerivative(RoughPowerError, ZeroDivisionError):
    pass


class StepUnderflow(RoughPowerError):
    def __init__(self, message, shell=None, time=None):
        super().__init__(message)
        self.shell = shell
        self.time = time


class MaxSteps(RoughPowerError):
    pass


class InsufficientShells(RoughPowerError):
    pass
