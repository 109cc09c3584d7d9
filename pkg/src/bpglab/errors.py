"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """A policy or estimator parameter is outside its valid domain."""


class ContractViolation(ValueError):
    """An input violates a declared precondition (bounds, support, shape)."""


class FactorizationError(RuntimeError):
    """A matrix could not be factorized even at the maximum jitter level."""


class NumericalInconsistency(RuntimeError):
    """A computed quantity is outside its mathematically feasible range."""


class DivergenceError(RuntimeError):
    """An optimizer produced parameters beyond the divergence guard."""
