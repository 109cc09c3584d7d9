"""Shared result types for gradient estimators and optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class GradientEstimate:
    """Posterior mean / point estimate of grad eta with covariance and provenance."""

    mean: np.ndarray
    cov: Optional[np.ndarray]
    n_samples: int
    estimator: str

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        if self.cov is not None:
            self.cov = np.asarray(self.cov, dtype=float)


@dataclass
class OptimizeResult:
    """Final parameters plus the logged learning curve."""

    theta: np.ndarray
    curve: list[tuple[int, float]] = field(default_factory=list)  # (update, metric)
    updates: int = 0
    stopped_early: bool = False
