"""Exception types shared across the toolkit."""


class PvmapError(Exception):
    """Base class for all toolkit errors."""


class FormatError(PvmapError):
    """A file does not conform to its on-disk format."""


class GeometryError(PvmapError):
    """Invalid polygon or geotransform."""


class DataError(PvmapError):
    """Inputs violate an operation's preconditions."""


class SingularMatrixError(DataError):
    """A linear solve hit a rank-deficient system."""

    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction


class TrainingDivergedError(DataError):
    """Training produced a non-finite loss (learning rate too high)."""


class ConfigError(PvmapError):
    """Bad pipeline configuration (unknown key, out-of-range value)."""
