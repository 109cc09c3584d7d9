"""Monte-Carlo (likelihood-ratio) policy gradient baseline.

The estimator is the plain average (1/M) sum_i R(xi_i) u(xi_i) with no
baseline subtraction; its reported covariance is the empirical covariance of
the per-path contributions divided by M.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from bpglab.envs import Env
from bpglab.errors import ContractViolation
from bpglab.gradients import GradientEstimate, OptimizeResult
from bpglab.linalg import sym
from bpglab.optimize import Schedule, guard_divergence, run_curve
from bpglab.policies import PolicyFamily
from bpglab.rollout import PathStats, rollout_paths


COV_DIM_LIMIT = 512  # skip the n x n sample covariance for huge tile codes


def mc_gradient_from_paths(stats: PathStats) -> GradientEstimate:
    contrib = stats.scores * stats.returns  # (n, M)
    n, m = contrib.shape
    mean = contrib.mean(axis=1)
    if n > COV_DIM_LIMIT:
        cov = None
    elif m > 1:
        centered = contrib - mean[:, None]
        cov = sym(centered @ centered.T / (m - 1)) / m
    else:
        cov = np.zeros((n, n))
    return GradientEstimate(mean, cov, m, "mc")


def mc_gradient(
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    n_paths: int,
    rng: np.random.Generator,
    gamma: Optional[float] = None,
    max_steps: Optional[int] = None,
) -> GradientEstimate:
    if n_paths < 1:
        raise ContractViolation("need at least one path")
    stats = rollout_paths(env, family, theta, n_paths, rng, gamma=gamma, max_steps=max_steps)
    return mc_gradient_from_paths(stats)


def mcpg_optimize(
    env: Env,
    family: PolicyFamily,
    theta0: np.ndarray,
    n_updates: int,
    n_paths: int,
    schedule: Schedule,
    rng: np.random.Generator,
    gamma: Optional[float] = None,
    direction: float = 1.0,
    max_steps: Optional[int] = None,
    eval_fn=None,
    eval_every: int = 1,
) -> OptimizeResult:
    """Episodic likelihood-ratio ascent (or descent, direction = -1)."""
    if n_updates < 0:
        raise ContractViolation("n_updates must be nonnegative")
    theta = family.validate_theta(theta0).copy()
    curve: list[tuple[int, float]] = []
    run_curve(eval_fn, theta, 0, eval_every, n_updates, curve)
    for j in range(n_updates):
        est = mc_gradient(env, family, theta, n_paths, rng, gamma=gamma, max_steps=max_steps)
        theta = theta + direction * schedule.rate(j) * est.mean
        guard_divergence(theta, j, "mcpg")
        run_curve(eval_fn, theta, j + 1, eval_every, n_updates, curve)
    return OptimizeResult(theta, curve, n_updates)
