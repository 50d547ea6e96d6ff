"""Exception hierarchy shared across the toolkit."""


class AadtError(Exception):
    """Base class for all toolkit errors."""


class DataError(AadtError):
    """Malformed, inconsistent, or empty input data."""


class NumericalError(AadtError):
    """A numerical procedure failed to converge or produced non-finite values."""


class UsageError(AadtError):
    """Invalid arguments or configuration supplied by the caller."""
