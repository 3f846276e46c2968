"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are inconsistent for the requested operation."""


class ConfigError(ValueError):
    """A configuration value is out of range or unknown."""


class InputError(ValueError):
    """Caller-supplied data violates a precondition."""


class FormatError(ValueError):
    """A serialized container is malformed, truncated, or corrupt."""


class StateError(RuntimeError):
    """Operation called in a state that does not permit it."""


class NumericError(RuntimeError):
    """A computation produced non-finite values."""


class CompatError(RuntimeError):
    """Artifacts are mutually incompatible (checksum or layout mismatch)."""


class TrainingError(RuntimeError):
    """Training diverged or otherwise failed."""
