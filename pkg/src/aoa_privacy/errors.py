"""Exception types raised across the package."""


class AoaPrivacyError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateGeometryError(AoaPrivacyError, ValueError):
    """Coincident points, parallel bearings or other ill-posed geometry."""


class ConfigError(AoaPrivacyError, ValueError):
    """Invalid or unknown configuration entry."""


class InsufficientSmoothingError(AoaPrivacyError, ValueError):
    """Spatial smoothing produced fewer than two snapshots."""


class NoPathError(AoaPrivacyError, LookupError):
    """The angle-distance profile holds no retained peak."""


class DefenseNotApplicableError(AoaPrivacyError):
    """The channel lacks the reflected path a defense needs."""


class CapabilityError(AoaPrivacyError, ValueError):
    """The transmit array is too small for the requested precoder."""
