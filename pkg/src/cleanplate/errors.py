"""Exception hierarchy shared across the library.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class CleanplateError(Exception):
    """Base class for all library errors."""


class ConfigError(CleanplateError):
    """Invalid or inconsistent configuration."""


class DataError(CleanplateError):
    """Missing, malformed, or misaligned input data."""


class NumericalError(CleanplateError):
    """A numerical procedure could not produce a valid result."""


class InsufficientSeedsError(NumericalError):
    """Depth densification needs at least 3 non-collinear seed pixels."""


class UnconstrainedRegistrationError(NumericalError):
    """Point-to-plane registration with degenerate geometry (normal rank < 3)."""


class RegistrationFailedError(NumericalError):
    """Registration did not reach an acceptable alignment."""


class InstanceTooLargeError(NumericalError):
    """Exhaustive MAP enumeration above the labeling-count cap."""
