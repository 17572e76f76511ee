"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when user-supplied input fails a domain check."""


class StoreError(Exception):
    """Base class for persistence failures."""


class FormatVersionError(StoreError):
    """File declares a format version this code does not understand."""


class CorruptFileError(StoreError):
    """File structure is damaged: bad header, short payload, bad run lengths."""


class ConsistencyError(StoreError):
    """File is well-formed but internally contradictory."""
