"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented invariant (law, config, tree, ...)."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ResourceLimitError(RuntimeError):
    """A configured cap (population, enumeration size, memory, steps) was hit."""


class EnumerationBoundError(ResourceLimitError):
    pass


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class GuardError(ValueError):
    """A boundary-effect or regime guard was violated."""


class ZeroEffectiveSampleError(RuntimeError):
    """Every sample was rejected or carried zero weight."""
