"""Exception types raised across the package."""


class RatPressError(Exception):
    """Base class for all package errors."""


class InvalidMap(RatPressError):
    pass


class RootSolverFailure(RatPressError):
    pass


class BudgetExceeded(RatPressError):
    pass


class EuclideanAtInfinity(RatPressError):
    pass


class DegenerateRoot(RatPressError):
    pass


class SampledTreeUnsupported(RatPressError):
    pass


class OutOfGrid(RatPressError):
    pass


class NoZeroInGrid(RatPressError):
    pass


class EmptyInterval(RatPressError):
    pass


class NoCriticalPointsInJulia(RatPressError):
    pass


class OverlappingComponents(RatPressError):
    pass


class VerificationFailed(RatPressError):
    def __init__(self, message, n=None, sample=None):
        super().__init__(message)
        self.n = n
        self.sample = sample


class EmptyBranchSet(RatPressError):
    pass


class SlopeUnattainable(RatPressError):
    pass


class StrictConvexityRequired(RatPressError):
    pass


class ConfigError(RatPressError):
    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


class EstimatorDisagreement(UserWarning):
    """Pressure estimators at one grid point spread beyond the threshold."""
