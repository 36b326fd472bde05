"""Exception types shared across the package."""


class RadarcastError(Exception):
    """Base class for all package errors."""


class DimensionError(RadarcastError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ConfigError(RadarcastError, ValueError):
    """A configuration value is invalid or inconsistent."""


class DegenerateInputError(RadarcastError, ValueError):
    """Input too small (or empty) for the operation to be defined."""


class FormatError(RadarcastError, ValueError):
    """A file does not follow the expected on-disk layout."""


class ValidationError(RadarcastError, ValueError):
    """Loaded data disagrees with what a configuration requires.

    ``missing``, ``extra`` and ``mismatched`` carry the full diff.
    """

    def __init__(self, message, missing=(), extra=(), mismatched=()):
        super().__init__(message)
        self.missing = list(missing)
        self.extra = list(extra)
        self.mismatched = list(mismatched)


class DomainError(RadarcastError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ScheduleError(RadarcastError, ValueError):
    """Iteration index outside ``[0, N]``."""
