"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InputError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class MetricError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Raised when training produces a non-finite loss.

    ``dump`` holds the offending iteration's state for post-mortem inspection.
    """

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}
