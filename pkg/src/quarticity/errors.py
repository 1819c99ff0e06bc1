"""Exception types mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or usage (exit code 1)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


class NumericalError(ArithmeticError):
    """Non-finite or otherwise unusable numerical result (exit code 3)."""
