"""Fisher information matrix construction and solves.

Every estimator returns a :class:`FisherInfo`, which hides whether the matrix
is held densely (the usual case) or as a low-rank-plus-jitter operator (tile-
coded policies with tens of thousands of parameters).  Solves always go
through a symmetric factorization with the package jitter ladder; Fisher
matrices get the preemptive ``1e-6`` diagonal term since sample estimates are
routinely rank-deficient.

Estimation methods (CLI flag ``--fisher``):

``analytic``          closed form; available for the bandit family only.
``mc`` (traj-mc)      average of trajectory-score outer products.
``state-action-avg``  average of per-step score outer products (stationary
                      weighting, unit mass).
``g-est``             geometric-restart estimator of the discounted weighting
                      (mass 1/(1-gamma)); requires gamma < 1.
``ml``                maximum-likelihood linear-Gaussian model of the LQR
                      transition, then traj-mc on trajectories simulated from
                      the fitted model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import sparse as sp

from bpglab.envs import Env, Lqr
from bpglab.errors import ContractViolation, ParameterDomainError
from bpglab.linalg import JITTER_FIRST, CholFactor, sym
from bpglab.policies import PolicyFamily


class LowRankPlusJitter:
    """Operator form eps*I + Z Z^T with sparse Z, solved by Woodbury."""

    def __init__(self, z: sp.spmatrix, eps: float):
        self.z = z.tocsc()
        self.eps = float(eps)
        self.n = z.shape[0]
        k = z.shape[1]
        gram = (self.z.T @ self.z).toarray()
        self._inner = CholFactor(np.eye(k) * eps + gram * 1.0, 0.0)
        # inner system is eps*I + Z^T Z, SPD by construction

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        zt_b = self.z.T @ b
        return (b - self.z @ self._inner.solve(zt_b)) / self.eps

    def matvec(self, b):
        b = np.asarray(b, dtype=float)
        return self.eps * b + self.z @ (self.z.T @ b)


@dataclass
class FisherInfo:
    """Symmetric PSD Fisher matrix with a lazily usable inverse."""

    matrix: Union[np.ndarray, LowRankPlusJitter]
    method: str
    jitter: float = 0.0
    _factor: Optional[CholFactor] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.n if isinstance(self.matrix, LowRankPlusJitter) else self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        if isinstance(self.matrix, LowRankPlusJitter):
            raise ContractViolation("Fisher matrix held as an operator; dense form unavailable")
        return self.matrix

    def factor(self) -> CholFactor:
        if self._factor is None:
            # estimated matrices are routinely rank-deficient and get the
            # preemptive diagonal term; exact (analytic) ones are factored
            # clean so kernel identities hold to round-off
            pre = 0.0 if self.method == "analytic" else JITTER_FIRST
            self._factor = CholFactor(self.dense(), preemptive_jitter=pre)
            self.jitter = self._factor.jitter
        return self._factor

    def solve(self, b):
        """G^{-1} b via a PSD solve (never materializes an explicit inverse)."""
        if isinstance(self.matrix, LowRankPlusJitter):
            if sp.issparse(b):
                return self.matrix.solve(b.toarray())
            return self.matrix.solve(b)
        return self.factor().solve(b)

    def kf_cross(self, u_a, u_b) -> np.ndarray:
        """Fisher-kernel block U_a^T G^{-1} U_b for score matrices (n, A), (n, B)."""
        if isinstance(self.matrix, LowRankPlusJitter):
            za = self.matrix.z.T @ u_a
            zb = self.matrix.z.T @ u_b
            direct = u_a.T @ u_b
            if sp.issparse(direct):
                direct = direct.toarray()
            za_d = za.toarray() if sp.issparse(za) else np.asarray(za)
            zb_d = zb.toarray() if sp.issparse(zb) else np.asarray(zb)
            return (np.asarray(direct) - za_d.T @ self.matrix._inner.solve(zb_d)) / self.matrix.eps
        v = self.solve(u_b if not sp.issparse(u_b) else u_b.toarray())
        ua = u_a.toarray() if sp.issparse(u_a) else np.asarray(u_a)
        return ua.T @ v

    def kf_diag(self, u) -> np.ndarray:
        """Diagonal u_i^T G^{-1} u_i for the columns of a score matrix."""
        if isinstance(self.matrix, LowRankPlusJitter):
            za = self.matrix.z.T @ u
            za = za.toarray() if sp.issparse(za) else np.asarray(za)
            sol = self.matrix._inner.solve(za)
            if sp.issparse(u):
                nrm2 = np.asarray(u.multiply(u).sum(axis=0)).ravel()
            else:
                nrm2 = np.einsum("nb,nb->b", u, u)
            return (nrm2 - np.einsum("kb,kb->b", za, sol)) / self.matrix.eps
        ud = u.toarray() if sp.issparse(u) else np.asarray(u)
        return np.einsum("nb,nb->b", ud, self.solve(ud))

    def logdet(self) -> float:
        return self.factor().logdet()


def fisher_traj_mc(scores: np.ndarray) -> FisherInfo:
    """(1/M) sum of u_i u_i^T over trajectory scores, columns of ``scores``."""
    u = np.asarray(scores, dtype=float)
    if u.ndim != 2 or u.shape[1] == 0:
        raise ContractViolation("fisher_traj_mc needs a nonempty (dim, M) score matrix")
    return FisherInfo(sym(u @ u.T / u.shape[1]), "traj-mc")


def fisher_state_action_avg(scores) -> FisherInfo:
    """U U^T / (t+1) over per-step scores; sparse scores yield an operator form."""
    if sp.issparse(scores):
        t1 = scores.shape[1]
        if t1 == 0:
            raise ContractViolation("empty score matrix")
        z = scores.tocsc() / np.sqrt(t1)
        return FisherInfo(LowRankPlusJitter(z, JITTER_FIRST), "state-action-avg", JITTER_FIRST)
    u = np.asarray(scores, dtype=float)
    if u.ndim != 2 or u.shape[1] == 0:
        raise ContractViolation("empty score matrix")
    return FisherInfo(sym(u @ u.T / u.shape[1]), "state-action-avg")


def fisher_inv_recursive(prev_inverse: np.ndarray, u: np.ndarray, zeta: float) -> np.ndarray:
    """Sherman-Morrison update of G^{-1} for G' = (1-zeta) G + zeta u u^T."""
    if not 0.0 < zeta < 1.0:
        raise ParameterDomainError("zeta must lie strictly inside (0, 1)")
    p = np.asarray(prev_inverse, dtype=float)
    u = np.asarray(u, dtype=float).ravel()
    pu = p @ u
    denom = 1.0 - zeta + zeta * float(u @ pu)
    return (p - (zeta / denom) * np.outer(pu, pu)) / (1.0 - zeta)


def fisher_g_est(
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    n_episodes: int,
    gamma: float,
    rng: np.random.Generator,
    step_cap: Optional[int] = None,
) -> FisherInfo:
    """Geometric-restart estimator of the discounted state-action Fisher matrix.

    Each episode accumulates score outer products until a Bernoulli(1-gamma)
    clock fires; if the episode reaches its terminal first, the final outer
    product is added with weight 1/(1-gamma).  The result estimates the
    unnormalized discounted weighting (total mass 1/(1-gamma)).  Episodes are
    run in lockstep; a clock that has fired stops an episode early since no
    later step can contribute.
    """
    theta = family.validate_theta(theta)
    if gamma >= 1.0:
        raise ParameterDomainError("g-est requires gamma < 1 (restart weight is 1/(1-gamma))")
    if n_episodes < 1:
        raise ContractViolation("need at least one episode")
    cap = step_cap if step_cap is not None else (env.horizon or env.step_cap)

    g = np.zeros((family.dim, family.dim))
    states = env.reset_batch(n_episodes, rng)
    active = np.ones(n_episodes, dtype=bool)
    t = 0
    while np.any(active):
        idx = np.flatnonzero(active)
        cur = states[idx]
        obs = env.observe_batch(cur, rng)
        actions = family.sample_batch(theta, obs, rng)
        nxt, _, term, _ = env.step_batch(cur, actions, rng)
        u = family.score_batch(theta, obs, actions)
        if sp.issparse(u):
            u = u.toarray()
        done = term.copy()
        if env.horizon is not None and t + 1 >= env.horizon:
            done[:] = True
        # steps that end their episode contribute only through the final branch
        live = ~done
        fire = rng.random(idx.size) < (1.0 - gamma)
        w = np.where(done, 1.0 / (1.0 - gamma), live.astype(float))
        g += (u * w) @ u.T
        # an episode stops here if it terminated or its clock fired
        stop = done | (live & fire)
        active[idx[stop]] = False
        states[idx] = nxt
        t += 1
        if cap is not None and t >= cap and np.any(active):
            # an episode outliving the cap with an unfired clock is treated
            # like a termination: rare for gamma < 1 (probability gamma^cap)
            live_idx = np.flatnonzero(active)
            cur = states[live_idx]
            obs = env.observe_batch(cur, rng)
            actions = family.sample_batch(theta, obs, rng)
            u = family.score_batch(theta, obs, actions)
            if sp.issparse(u):
                u = u.toarray()
            g += (u / (1.0 - gamma)) @ u.T
            break
    return FisherInfo(sym(g / n_episodes), "g-est")


def fit_lqr_transition_model(transitions) -> np.ndarray:
    """Least-squares fit of x' = c1 x + c2 a + c3 + Normal(0, c4^2).

    ``transitions`` is an iterable of (x, a, x') triples or an (N, 3) array.
    Least squares coincides with maximum likelihood for this linear-Gaussian
    model; c4 is the residual standard deviation.
    """
    arr = np.asarray([(t[0], t[1], t[2]) for t in transitions], dtype=float)
    if arr.shape[0] < 10:
        raise ContractViolation("need at least 10 transitions to fit the model")
    design = np.column_stack([arr[:, 0], arr[:, 1], np.ones(arr.shape[0])])
    target = arr[:, 2]
    if np.linalg.matrix_rank(design) < 3:
        raise ContractViolation("rank-deficient design: transitions do not excite the model")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    c4 = float(np.sqrt(np.mean(resid**2)))
    return np.array([coef[0], coef[1], coef[2], c4])


def fisher_ml_lqr(
    family: PolicyFamily,
    theta: np.ndarray,
    transitions,
    rng: np.random.Generator,
    n_model_paths: int = 10**4,
) -> FisherInfo:
    """Fit the LQR transition model, then traj-mc on simulated trajectories."""
    c = fit_lqr_transition_model(transitions)
    theta = family.validate_theta(theta)
    x = Lqr.INIT_MEAN + Lqr.INIT_STD * rng.standard_normal(n_model_paths)
    scores = np.zeros((family.dim, n_model_paths))
    for _ in range(Lqr.horizon):
        a = family.sample_batch(theta, x, rng)
        scores += family.score_batch(theta, x, a)
        x = c[0] * x + c[1] * a + c[2] + c[3] * rng.standard_normal(n_model_paths)
    info = fisher_traj_mc(scores)
    return FisherInfo(info.matrix, "ml-model")


def fisher_analytic(family: PolicyFamily, theta) -> FisherInfo:
    fn = getattr(family, "analytic_fisher", None)
    if fn is None:
        raise ContractViolation(f"no analytic Fisher matrix for family {family.name!r}")
    return FisherInfo(fn(theta), "analytic")
