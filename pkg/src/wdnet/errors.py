"""Exception hierarchy shared by the library and the command line."""


class WDNetError(Exception):
    """Base class for errors raised on purpose by this package."""


class UsageError(WDNetError, ValueError):
    """Bad arguments: mismatched shapes, out-of-range parameters."""


class ConfigError(WDNetError, ValueError):
    """Invalid or inconsistent configuration."""


class NonFiniteLossError(WDNetError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
