"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class NumericError(ArithmeticError):
    """Non-finite values showed up where finite ones are required."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataError(ValueError):
    """Malformed or insufficient input data."""


class CheckpointError(RuntimeError):
    """Unreadable or incompatible checkpoint file."""
