"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values.

    ``index`` points at the offending path point or epoch when known, and
    ``payload`` carries the last finite state (e.g. a partially optimized path).
    """

    def __init__(self, message, index=None, payload=None):
        super().__init__(message)
        self.index = index
        self.payload = payload
