"""Exception types raised across the package."""


class HDCError(Exception):
    """Base class for package errors."""


class InvalidStateError(HDCError, RuntimeError):
    pass


class UnknownSymbolError(HDCError, KeyError):
    pass


class EncodeError(HDCError, ValueError):
    pass


class TrainingError(HDCError, ValueError):
    pass


class IngestError(HDCError, OSError):
    pass


class ModelMismatchError(HDCError, ValueError):
    """Model file and run configuration disagree (d, n, encoder, ...)."""


class InvariantError(HDCError, AssertionError):
    """An internal invariant was violated at runtime."""
