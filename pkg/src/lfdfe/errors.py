"""Exception types shared across the package."""


class LfdfeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(LfdfeError, ValueError):
    """An argument lies outside the domain of an operation."""


class RankDeficient(LfdfeError):
    """Zero forcing of the requested number of streams is impossible."""


class LengthMismatch(LfdfeError, ValueError):
    pass


class ShapeMismatch(LfdfeError, ValueError):
    pass


class TooFewEntries(LfdfeError, ValueError):
    pass


class TooLarge(LfdfeError, ValueError):
    pass


class AllInfeasible(LfdfeError):
    """Every codebook entry is rank deficient for the given channel."""


class MissingDensity(LfdfeError, ValueError):
    pass


class CampaignInfeasible(LfdfeError):
    """Too many channel draws had to be skipped during a campaign."""
