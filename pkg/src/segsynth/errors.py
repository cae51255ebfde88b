"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class SegsynthError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SegsynthError):
    """Invalid configuration value or an unusable combination of settings."""


class MaskError(SegsynthError, ValueError):
    """Mask algebra violation: overlap, unknown label value, bad shape."""


class DimensionMismatchError(SegsynthError, ValueError):
    """Rasters that must share H x W do not."""


class TransportError(SegsynthError):
    """Backend unreachable or the connection failed; retryable."""


class ProtocolError(SegsynthError):
    """Backend understood the request and rejected it; not retryable."""


class ManifestError(SegsynthError, ValueError):
    """Manifest file cannot be parsed."""
