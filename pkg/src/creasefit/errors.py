"""Exception types shared across the library."""


class CreasefitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(CreasefitError):
    pass


class DuplicatePointError(CreasefitError):
    pass


class EmptyCloudError(CreasefitError):
    pass


class NoFiniteUpsilonError(CreasefitError):
    """The unisolvency-radius ladder was exhausted; sampling is pathological."""


class RankDeficientError(CreasefitError):
    """A weighted least-squares neighborhood is not uni-solvent at tolerance.

    Carries the query location and, when known, the offending site index so
    callers can widen the neighborhood or reject the query.
    """

    def __init__(self, message, location=None, site_index=None):
        super().__init__(message)
        self.location = location
        self.site_index = site_index


class NoComponentsError(CreasefitError):
    """Every site fell inside the detected crease band; sampling too coarse."""


class ConjectureViolationError(CreasefitError):
    """The error-analysis design columns went numerically rank deficient.

    Not assumed impossible: the independence of those columns is checked at
    every query, and a violation is recorded (with the measured singular
    values) rather than silently regularized.
    """

    def __init__(self, message, location=None, sigma_min=None, sigma_max=None):
        super().__init__(message)
        self.location = location
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max


class EmptyCurveError(CreasefitError):
    pass


class ConfigError(CreasefitError):
    pass
