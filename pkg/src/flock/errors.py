class FlockError(Exception):
    """Base class for all errors raised by this package."""


class FrameworkError(FlockError, ValueError):
    pass


class DimensionError(FlockError, ValueError):
    pass


class ConditioningError(FlockError, ArithmeticError):
    """Gram matrix could not be factorized, or a posterior variance went clearly negative."""


class FrozenDatasetError(FlockError, RuntimeError):
    pass


class DivergenceError(FlockError, ArithmeticError):
    pass


class ConfigError(FlockError, ValueError):
    """Invalid scenario configuration. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class ConfigParseError(ConfigError):
    pass


class SchemaError(ConfigError):
    pass


class InvariantError(ConfigError):
    pass
