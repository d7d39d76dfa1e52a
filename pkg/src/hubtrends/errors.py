"""Exception types shared across the package."""


class HubtrendsError(Exception):
    """Base class for every error this package raises on purpose."""


class FormatError(HubtrendsError):
    """An input file is structurally unusable (bad header, wrong columns)."""


class DomainError(HubtrendsError, ValueError):
    """A value lies outside the domain an operation is defined on."""


class InsufficientDataError(HubtrendsError):
    """The operation needs more observations than the input provides."""


class DegenerateDataError(DomainError):
    """Observations are formally sufficient but carry no usable signal."""


class DuplicateModelError(HubtrendsError):
    """Two registry rows claim the same model id."""


class StoreIntegrityError(HubtrendsError):
    """Snapshot store contents violate the store format."""


class StoreLockedError(HubtrendsError):
    """Another writer currently holds the store lock."""


class SpliceError(HubtrendsError):
    """A history and a scraper series cannot be joined at the splice label."""


class MonthGapError(SpliceError):
    """Scraper coverage is missing for a whole calendar month."""

    def __init__(self, month, message=None):
        self.month = month
        super().__init__(message or f"no scraper snapshots observed during {month:%Y-%m}")


class ReferenceUnavailableError(HubtrendsError):
    """No reference curve can be built or applied for a size bucket."""


class AlreadyAdjustedError(HubtrendsError):
    """A rating observation has already been recalibrated once."""
