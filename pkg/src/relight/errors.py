"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or lengths of the inputs are inconsistent."""


class ConfigurationError(ValueError):
    """An architecture or run configuration violates its invariants."""


class DecodeError(RuntimeError):
    """A file could not be decoded as an image."""


class DataIntegrityError(RuntimeError):
    """A dataset directory is malformed (missing or unmatched files)."""


class CheckpointFormatError(RuntimeError):
    """A checkpoint file is corrupt or has an invalid manifest."""


class NumericError(ArithmeticError):
    """A loss or gradient became non-finite."""
