"""Exception types shared across the package."""


class FilterError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(FilterError):
    """Matrix or vector shapes are mutually inconsistent."""


class NonFinite(FilterError):
    """A NaN or Inf appeared where finite values are required."""


class NotPositiveDefinite(FilterError):
    """A matrix required to be symmetric positive definite is not."""


# The same failure seen from the skew-algebra side; kept as an alias so both
# names work in except clauses.
NotSPD = NotPositiveDefinite


class NotSkew(FilterError):
    """A matrix required to be skew-symmetric is not."""


class SingularInput(FilterError):
    """A factorization failed because its input is (numerically) singular."""


class SingularG(FilterError):
    """A gauge or flow matrix lost invertibility during integration."""


class CovarianceBlowup(FilterError):
    """The covariance norm exceeded the divergence threshold."""


class InsufficientParticles(FilterError):
    """An ensemble statistic needs more particles than are available."""


class RankExceedsChannels(FilterError):
    """A factorization needs more noise channels than were allowed."""


class DegenerateC(FilterError):
    """The scalar feasibility bound is undefined because c = 0."""


class ConfigError(FilterError):
    """An experiment configuration file is invalid."""
