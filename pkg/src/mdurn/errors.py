class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class ModelViolation(RuntimeError):
    """A model produced a value the urn dynamics do not allow."""

    def __init__(self, message: str, n: int | None = None):
        self.n = n
        super().__init__(message if n is None else f"step {n}: {message}")


class InsufficientData(RuntimeError):
    """Not enough information yet to form the test statistic."""


class DegenerateNormalization(InsufficientData):
    """Estimated normalization fell to or below the floor with flooring disabled."""
