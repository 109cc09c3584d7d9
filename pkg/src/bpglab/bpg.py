"""Bayesian policy gradient over complete trajectories.

Two Gaussian-process models of the gradient integrand are supported,
identified by their CLI tags:

``bq1``  a vector-valued GP over R(xi) * u(xi) with the quadratic Fisher
         kernel (1 + u_i^T G^{-1} u_j)^2; the kernel-weight integrals have
         the closed form b_i = 1 + u_i^T G^{-1} u_i, b0 = 1 + n, giving
         posterior mean Y C b and covariance (b0 - b^T C b) I.
``bq2``  a scalar GP over the return R(xi) with the Fisher kernel
         u_i^T G^{-1} u_j; here B = U, B0 = G, posterior mean B C y and
         covariance B0 - B C B^T.

Both admit an online-sparsified variant (``bq1-sparse``/``bq2-sparse``)
whose moments are computed from the dictionary kernel matrix and the
projection rows A, algebraically identical to the dense forms as tau -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from bpglab.bq import decoupled_vector_posterior
from bpglab.envs import Env
from bpglab.errors import ContractViolation, ParameterDomainError
from bpglab.fisher import FisherInfo, fisher_analytic, fisher_g_est, fisher_traj_mc
from bpglab.gradients import GradientEstimate, OptimizeResult
from bpglab.linalg import CholFactor, clamp_psd, sym
from bpglab.optimize import Schedule, guard_divergence, run_curve
from bpglab.policies import PolicyFamily
from bpglab.rollout import PathStats, rollout_paths
from bpglab.sparsify import OnlineDictionary

MODEL_TAGS = ("bq1", "bq2")
NOISE_FLOOR_SCALE = 1e-4  # jitter noise when rewards are deterministic
DEFAULT_TAU = 1e-2


def _kind(model: str) -> str:
    base = model.removesuffix("-sparse")
    if base not in MODEL_TAGS:
        raise ContractViolation(f"unknown BPG model {model!r}")
    return base


def traj_kernel(u_i: np.ndarray, u_j: np.ndarray, fisher: FisherInfo, model: str = "bq1") -> float:
    """Trajectory kernel between two score vectors (quadratic for bq1, linear for bq2)."""
    v = fisher.solve(np.asarray(u_j, dtype=float))
    lin = float(np.asarray(u_i, dtype=float) @ v)
    return (1.0 + lin) ** 2 if _kind(model) == "bq1" else lin


def traj_kernel_gram(U: np.ndarray, fisher: FisherInfo, model: str) -> np.ndarray:
    lin = sym(np.asarray(U).T @ fisher.solve(np.asarray(U)))
    return (1.0 + lin) ** 2 if _kind(model) == "bq1" else lin


@dataclass
class TrajPrior:
    """Closed-form kernel-weight integrals for one BPG model."""

    model: str
    b: Optional[np.ndarray] = None  # bq1: (M,)
    b0: Optional[float] = None  # bq1: 1 + n
    B: Optional[np.ndarray] = None  # bq2: (n, M) = U
    B0: Optional[np.ndarray] = None  # bq2: (n, n) = G


def closed_form_prior(model: str, scores: np.ndarray, fisher: FisherInfo) -> TrajPrior:
    u = np.asarray(scores, dtype=float)
    if u.ndim != 2 or u.shape[1] == 0:
        raise ContractViolation("closed_form_prior needs a nonempty (n, M) score matrix")
    n = u.shape[0]
    if _kind(model) == "bq1":
        quad = np.einsum("nm,nm->m", u, fisher.solve(u))
        return TrajPrior(model, b=1.0 + quad, b0=float(1 + n))
    return TrajPrior(model, B=u, B0=fisher.dense())


def noise_cov(
    model: str,
    T: int,
    sigma_r: float,
    scores: np.ndarray,
    kernel_diag: np.ndarray,
) -> Union[np.ndarray, list[np.ndarray]]:
    """Measurement-noise diagonal(s) for the return observations.

    With reward noise of std ``sigma_r`` over ``T`` steps the return noise
    variance is T sigma_r^2; for bq1 the observation of component i is
    R * u_i, so its noise is scaled by u_i(xi_j)^2 per path.  A jitter floor
    proportional to the mean kernel diagonal keeps K + Sigma well posed when
    rewards are deterministic (and keeps the sparse route's Sigma^{-1} finite).
    """
    if sigma_r < 0 or T < 1:
        raise ParameterDomainError("need sigma_r >= 0 and T >= 1")
    u = np.asarray(scores, dtype=float)
    floor = NOISE_FLOOR_SCALE * float(np.mean(kernel_diag))
    base = T * sigma_r**2
    if _kind(model) == "bq2":
        return np.full(u.shape[1], base if base > 0 else floor)
    # bq1 keeps the floor unconditionally: a zero score component would
    # otherwise zero out a diagonal entry and break the sparse route
    return [base * u[i] ** 2 + floor for i in range(u.shape[0])]


def resolve_fisher(
    fisher: Union[FisherInfo, str],
    stats: PathStats,
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    rng: np.random.Generator,
    gamma: Optional[float] = None,
) -> FisherInfo:
    """Turn a method tag into a FisherInfo (an explicit FisherInfo passes through)."""
    if isinstance(fisher, FisherInfo):
        return fisher
    if fisher == "analytic":
        return fisher_analytic(family, theta)
    if fisher == "mc":
        return fisher_traj_mc(stats.scores)
    if fisher == "g-est":
        g = env.default_gamma if gamma is None else gamma
        return fisher_g_est(env, family, theta, stats.returns.shape[0], g, rng)
    raise ContractViolation(f"fisher method {fisher!r} not usable here (ml needs transition data)")


def bpg_eval_from_paths(
    stats: PathStats,
    fisher: FisherInfo,
    model: str = "bq1",
    sigma_r: float = 0.0,
    T: Optional[int] = None,
) -> GradientEstimate:
    """Posterior gradient moments from an already-sampled batch of paths."""
    u, returns = stats.scores, stats.returns
    n, m = u.shape
    horizon = T if T is not None else int(stats.lengths.max())
    K = traj_kernel_gram(u, fisher, model)
    sigma = noise_cov(model, horizon, sigma_r, u, np.diag(K))
    if _kind(model) == "bq1":
        prior = closed_form_prior(model, u, fisher)
        Y = u * returns
        per_component = sigma_r > 0
        mean, var = decoupled_vector_posterior(
            K, sigma if per_component else sigma[0], Y, prior.b, prior.b0,
            per_component_sigma=per_component,
        )
        return GradientEstimate(mean, np.diag(var), m, model)
    factor = CholFactor(K + np.diag(sigma))
    mean = u @ factor.solve(returns)
    cov = clamp_psd(fisher.dense() - u @ factor.solve(u.T))
    return GradientEstimate(mean, cov, m, model)


def score_dictionary(scores: np.ndarray, fisher: FisherInfo, model: str, tau: float) -> OnlineDictionary:
    """Run online sparsification over path scores in sampling order."""
    u = np.asarray(scores, dtype=float)
    v = fisher.solve(u)
    lin = u.T @ v  # (M, M) linear kernel values
    diag = np.diag(lin)
    if _kind(model) == "bq1":
        kmat, kdiag = (1.0 + lin) ** 2, (1.0 + diag) ** 2
    else:
        kmat, kdiag = lin, diag
    d = OnlineDictionary(tau)
    m_paths = u.shape[1]
    pos = 0
    while pos < m_paths:
        members = d.member_positions
        consumed = d.offer_block(kdiag[pos:], kmat[np.ix_(members, range(pos, m_paths))])
        pos += consumed
    return d


def sparsify_admit(dictionary: OnlineDictionary, kzz: float, kvec: np.ndarray) -> bool:
    """Offer one candidate (kernel values precomputed) to a dictionary."""
    return dictionary.offer(kzz, kvec)


def bpg_eval_sparse_from_paths(
    stats: PathStats,
    fisher: FisherInfo,
    model: str = "bq1",
    sigma_r: float = 0.0,
    T: Optional[int] = None,
    tau: float = DEFAULT_TAU,
) -> GradientEstimate:
    """Sparsified posterior moments over the dictionary basis."""
    u, returns = stats.scores, stats.returns
    n, m_paths = u.shape
    horizon = T if T is not None else int(stats.lengths.max())
    d = score_dictionary(u, fisher, model, tau)
    a = d.projection_matrix()  # (M, m)
    ktilde = d.K
    members = np.asarray(d.member_positions, dtype=int)
    u_dict = u[:, members]
    kdiag_full = _kernel_diag(u, fisher, model)
    sigma = noise_cov(model, horizon, sigma_r, u, kdiag_full)

    if _kind(model) == "bq1":
        quad = np.einsum("nm,nm->m", u_dict, fisher.solve(u_dict))
        btilde = 1.0 + quad
        b0 = float(1 + n)
        Y = u * returns
        eye = np.eye(d.size)
        if sigma_r > 0:  # per-component noise diagonals
            means = np.empty(n)
            variances = np.empty(n)
            for i in range(n):
                inv_diag = 1.0 / sigma[i]
                p = a.T @ (a * inv_diag[:, None])  # A^T Sigma^{-1} A
                x = np.linalg.solve(ktilde @ p + eye, btilde)
                means[i] = float((Y[i] * inv_diag) @ (a @ x))
                variances[i] = max(b0 - float(btilde @ (p @ x)), 0.0)
        else:
            inv_diag = 1.0 / sigma[0]
            p = a.T @ (a * inv_diag[:, None])
            x = np.linalg.solve(ktilde @ p + eye, btilde)
            means = (Y * inv_diag) @ (a @ x)
            variances = np.full(n, max(b0 - float(btilde @ (p @ x)), 0.0))
        return GradientEstimate(means, np.diag(variances), m_paths, model + "-sparse")

    inv_diag = 1.0 / sigma
    p = a.T @ (a * inv_diag[:, None])
    s2 = p @ ktilde + np.eye(d.size)
    w = np.linalg.solve(s2, a.T @ (returns * inv_diag))
    mean = u_dict @ w
    x = np.linalg.solve(s2, p @ u_dict.T)
    cov = clamp_psd(fisher.dense() - u_dict @ x)
    return GradientEstimate(mean, cov, m_paths, model + "-sparse")


def _kernel_diag(u: np.ndarray, fisher: FisherInfo, model: str) -> np.ndarray:
    quad = np.einsum("nm,nm->m", u, fisher.solve(u))
    return (1.0 + quad) ** 2 if _kind(model) == "bq1" else quad


def bpg_eval(
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    n_paths: int,
    rng: np.random.Generator,
    model: str = "bq1",
    fisher: Union[FisherInfo, str] = "mc",
    sigma_r: float = 0.0,
    gamma: Optional[float] = None,
    tau: Optional[float] = None,
) -> GradientEstimate:
    """Sample ``n_paths`` trajectories and return the posterior gradient moments."""
    if n_paths < 1:
        raise ContractViolation("need at least one path")
    stats = rollout_paths(env, family, theta, n_paths, rng, gamma=gamma)
    info = resolve_fisher(fisher, stats, env, family, theta, rng, gamma)
    if model.endswith("-sparse"):
        return bpg_eval_sparse_from_paths(
            stats, info, model.removesuffix("-sparse"), sigma_r, tau=tau or DEFAULT_TAU
        )
    return bpg_eval_from_paths(stats, info, model, sigma_r)


def bpg_optimize(
    env: Env,
    family: PolicyFamily,
    theta0: np.ndarray,
    n_updates: int,
    n_paths: int,
    schedule: Schedule,
    rng: np.random.Generator,
    model: str = "bq1",
    variant: str = "plain",
    fisher: Union[FisherInfo, str] = "mc",
    sigma_r: float = 0.0,
    gamma: Optional[float] = None,
    tau: Optional[float] = None,
    direction: float = 1.0,
    max_steps: Optional[int] = None,
    eval_fn=None,
    eval_every: int = 1,
) -> OptimizeResult:
    """Iterated policy updates along the posterior mean of the gradient.

    ``variant`` selects the update: ``plain`` follows the posterior mean,
    ``natural`` left-multiplies by G^{-1}, and ``var`` scales componentwise by
    [(1+n) I - Cov] / (1+n), shrinking steps whose estimates are uncertain.
    ``direction`` is +1 to maximize the expected return, -1 to minimize.
    """
    if n_updates < 0:
        raise ContractViolation("n_updates must be nonnegative")
    if variant not in ("plain", "natural", "var"):
        raise ContractViolation(f"unknown update variant {variant!r}")
    theta = family.validate_theta(theta0).copy()
    n = family.dim
    curve: list[tuple[int, float]] = []
    run_curve(eval_fn, theta, 0, eval_every, n_updates, curve)
    for j in range(n_updates):
        if fisher == "ml":
            # model-based route: fit the transition model on this update's
            # step data, then estimate G from trajectories it simulates
            from bpglab.fisher import fisher_ml_lqr
            from bpglab.rollout import rollout_episodes, stats_from_episodes

            episodes = rollout_episodes(env, family, theta, n_paths, rng, max_steps=max_steps)
            stats = stats_from_episodes(episodes, family, theta,
                                        env.default_gamma if gamma is None else gamma)
            transitions = [
                (ep.obs[t], ep.actions[t], ep.obs[t + 1])
                for ep in episodes
                for t in range(len(ep) - 1)
            ]
            info = fisher_ml_lqr(family, theta, transitions, rng)
        else:
            stats = rollout_paths(env, family, theta, n_paths, rng, gamma=gamma,
                                  max_steps=max_steps)
            info = resolve_fisher(fisher, stats, env, family, theta, rng, gamma)
        if model.endswith("-sparse") or tau is not None:
            est = bpg_eval_sparse_from_paths(
                stats, info, model.removesuffix("-sparse"), sigma_r, tau=tau or DEFAULT_TAU
            )
        else:
            est = bpg_eval_from_paths(stats, info, model, sigma_r)
        delta = est.mean
        if variant == "natural":
            delta = info.solve(delta)
        elif variant == "var":
            scale = ((1.0 + n) * np.eye(n) - est.cov) / (1.0 + n)
            delta = scale @ delta
        beta = schedule.rate(j)
        if schedule.det_scale:
            beta = beta * math.exp(info.logdet())
        theta = theta + direction * beta * delta
        guard_divergence(theta, j, f"bpg-{variant}")
        run_curve(eval_fn, theta, j + 1, eval_every, n_updates, curve)
    return OptimizeResult(theta, curve, n_updates)
