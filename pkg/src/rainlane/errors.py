"""Exception types shared across the package.

The CLI maps these onto its exit codes: decode/dataset/dimension problems
are data errors (exit 2), NumericalError is a numerical failure (exit 3).
"""


class RainlaneError(Exception):
    """Base class for all package-specific errors."""


class DecodeError(RainlaneError):
    """An image file could not be read or has an unsupported format."""


class DimensionError(RainlaneError):
    """Buffer shapes or channel counts are incompatible for an operation."""


class CheckpointError(RainlaneError):
    """A model checkpoint is corrupt, truncated, or of the wrong version."""


class DatasetError(RainlaneError):
    """A dataset manifest or its referenced files are invalid."""


class NumericalError(RainlaneError):
    """Training or inference produced non-finite values."""
