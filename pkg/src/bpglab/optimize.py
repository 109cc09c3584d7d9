"""Learning-rate schedules and the shared policy-update loop machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from bpglab.errors import DivergenceError

DIVERGENCE_LIMIT = 1e6


@dataclass
class Schedule:
    """Per-component learning rates with the benchmark decay laws.

    ``horizon20``        beta_j = beta0 * 20 / (20 + j)
    ``search-converge``  beta_j = beta0 * beta_c / (beta_c + j); beta_c = inf
                         gives a constant rate
    ``constant``         beta_j = beta0
    ``det_scale``        multiply the rate by det(G) (the natural-update rule
                         used on the squashed LQR parameterization)
    """

    beta0: np.ndarray | float
    kind: str = "constant"
    beta_c: float = math.inf
    det_scale: bool = False

    def rate(self, j: int):
        b0 = np.asarray(self.beta0, dtype=float)
        if self.kind == "constant":
            return b0
        if self.kind == "horizon20":
            return b0 * (20.0 / (20.0 + j))
        if self.kind == "search-converge":
            if math.isinf(self.beta_c):
                return b0
            return b0 * (self.beta_c / (self.beta_c + j))
        raise ValueError(f"unknown schedule kind {self.kind!r}")


def guard_divergence(theta: np.ndarray, update_index: int, algo: str) -> None:
    worst = float(np.max(np.abs(theta))) if theta.size else 0.0
    if not np.isfinite(worst) or worst > DIVERGENCE_LIMIT:
        raise DivergenceError(
            f"{algo}: |theta|_inf = {worst:.3g} at update {update_index} exceeds {DIVERGENCE_LIMIT:g}"
        )


def run_curve(
    eval_fn: Optional[Callable[[np.ndarray], float]],
    theta: np.ndarray,
    update: int,
    every: int,
    total: int,
    curve: list,
) -> None:
    """Record the evaluation metric at the configured cadence (always at 0 and end)."""
    if eval_fn is None:
        return
    if update % every == 0 or update == total:
        curve.append((update, float(eval_fn(theta))))
