"""Exception types shared across the package."""


class PqixError(Exception):
    """Base class for all pqix errors."""


class FormatError(PqixError):
    """A file or byte stream does not match its declared format."""
