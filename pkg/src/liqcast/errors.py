"""Exception types shared across the package."""


class LiqcastError(Exception):
    """Base class for all package errors."""


class DimensionError(LiqcastError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(LiqcastError):
    """An operation was called outside its documented contract."""


class SchemaError(LiqcastError):
    """An input file does not have the required columns."""


class DataError(LiqcastError):
    """Input data violates a value-level requirement (e.g. non-positive FX rate)."""


class SizingError(LiqcastError):
    """Not enough rows/observations to carry out the requested computation."""


class OptimizationError(LiqcastError):
    """Training aborted, e.g. on a non-finite gradient."""


class CheckpointError(LiqcastError):
    """A model checkpoint is unreadable, tampered with, or version-incompatible."""
