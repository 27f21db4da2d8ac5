"""Exception types shared by every module."""


class HeadShadowError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HeadShadowError, ValueError):
    """An argument is outside its valid domain (cutoff above Nyquist, negative delay, ...)."""


class DataError(HeadShadowError, ValueError):
    """Signal or file content is unusable (non-finite samples, all-zero IR, unreadable file)."""
