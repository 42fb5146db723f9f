"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition (shape, range, parity)."""


class ConfigError(ValueError):
    """A pipeline configuration could not be parsed or validated."""


class DivergenceError(RuntimeError):
    """An optimization produced a non-finite loss and was aborted."""
