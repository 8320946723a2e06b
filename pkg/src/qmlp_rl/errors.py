"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when array shapes do not line up."""


class ConfigError(ValueError):
    """Raised for invalid architecture, training or experiment settings."""


class StateError(RuntimeError):
    """Raised when an object is used out of order (e.g. backward before forward)."""


class NumericFault(FloatingPointError):
    """Raised when a NaN or Inf shows up where finite numbers are required."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
