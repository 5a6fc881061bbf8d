"""Exception types shared across the pipeline."""


class PresimError(Exception):
    """Base class for all pipeline errors."""


class FormatError(PresimError):
    """A file could not be parsed in the expected format."""


class ValidationError(PresimError):
    """Inputs violate a documented invariant (duplicate ids, bad ranges, ...)."""


class DataQualityError(PresimError):
    """Observations fail a quality bound (e.g. a gap longer than allowed)."""


class AlignmentError(PresimError):
    """Series that must share a time axis do not."""


class ConfigurationError(PresimError):
    """A configuration value or constraint system is unusable."""


class GeometryError(PresimError):
    """A spatial system (kriging, distances) is singular or inconsistent."""
