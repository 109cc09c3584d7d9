"""Bayesian policy gradient and actor-critic estimation toolkit.

Gradient estimators (Monte-Carlo, Bayesian quadrature over trajectories,
Bayesian actor-critic from a Gaussian-process temporal-difference critic),
the benchmark environments they are evaluated on, exact-gradient oracles,
and a reproducible experiment harness.
"""

from bpglab.errors import (
    ContractViolation,
    FactorizationError,
    NumericalInconsistency,
    ParameterDomainError,
)

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "FactorizationError",
    "NumericalInconsistency",
    "ParameterDomainError",
    "__version__",
]
