class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Malformed data on disk or invalid array contents (CLI exit code 3)."""


class NumericError(ArithmeticError):
    """Non-finite values encountered during training (CLI exit code 4)."""
