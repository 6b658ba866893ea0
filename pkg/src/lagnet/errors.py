"""Exception hierarchy shared by the library and the CLI."""


class LagnetError(Exception):
    """Base class for all lagnet errors."""


class ConfigError(LagnetError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(LagnetError):
    """Malformed or out-of-contract input data (CLI exit code 3)."""


class NumericalError(LagnetError):
    """Numerical failure during fitting (CLI exit code 4)."""
