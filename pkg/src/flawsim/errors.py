"""Exception types shared across the package."""


class FlawSimError(Exception):
    """Base class for all errors raised by flawsim."""


class DimensionError(FlawSimError, ValueError):
    """Operator and state sizes do not agree."""


class CapacityError(FlawSimError, ValueError):
    """A request exceeds the dense-size or register-size guard."""


class DomainError(FlawSimError, ValueError):
    """A physical parameter is outside its allowed range."""


class IntegrationError(FlawSimError, RuntimeError):
    """Time propagation failed (for example the norm drifted)."""


class StiffnessError(IntegrationError):
    """The adaptive integrator's step size underflowed."""


class ConfigError(FlawSimError, ValueError):
    """A run configuration is malformed or has unknown keys."""
