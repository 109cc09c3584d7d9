"""Gaussian-process temporal-difference critic.

The generative model ties observed rewards to unobserved action values,
r(z_i) = Q(z_i) - gamma Q(z_{i+1}) + noise, written in matrix form as
r = H Q + N with the banded (1, -gamma) matrix H and noise covariance
Sigma = sigma^2 H H^T.  Conditioning a GP prior over Q on the rewards gives

    alpha = H^T (H K H^T + Sigma)^{-1} r,
    C     = H^T (H K H^T + Sigma)^{-1} H,

with posterior moments Q(z) = k(z)^T alpha and k(z, z) - k(z)^T C k(z).

Episodes are assembled block-diagonally: a true terminal closes its block
with the square (episodic) H variant; an episode truncated by a step cap
keeps the continuing form, with the boundary state-action pair joining the
basis.  All solves exploit the banded structure of Sigma and a low-rank
factorization of K over the *distinct* basis points, so duplicated
state-action pairs (discrete tasks) cost nothing extra.

The sparsified fit replaces the basis by an online dictionary (admission
when the squared feature-space residual exceeds tau) with H-tilde = H A.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla
from scipy import sparse as sp

from bpglab.errors import ContractViolation, NumericalInconsistency, ParameterDomainError
from bpglab.kernels import CompositeKernel, KernelData
from bpglab.linalg import CholFactor, chol_lower, sym
from bpglab.rollout import Episode
from bpglab.sparsify import OnlineDictionary

DICT_CHUNK = 512


def build_H(t: int, gamma: float, episodic: bool) -> np.ndarray:
    """The banded (1, -gamma) model matrix; episodic form drops the last column."""
    if t < 1:
        raise ContractViolation("need t >= 1")
    h = np.zeros((t, t + 1))
    idx = np.arange(t)
    h[idx, idx] = 1.0
    h[idx, idx + 1] = -gamma
    return h[:, :t] if episodic else h


def build_noise_cov(sigma2: float, h: np.ndarray) -> np.ndarray:
    """sigma^2 H H^T (tridiagonal; the episodic H yields the adjusted corner)."""
    if sigma2 < 0:
        raise ParameterDomainError("sigma2 must be nonnegative")
    return sigma2 * (h @ h.T)


@dataclass
class _Assembly:
    h: sp.csr_matrix  # (t, N) block-diagonal model matrix
    rewards: np.ndarray  # (t,)
    sigma_banded: Optional[np.ndarray]  # (2, t) lower banded Sigma, None if sigma2 == 0
    basis_obs: np.ndarray
    basis_actions: np.ndarray


def _assemble(episodes: list[Episode], gamma: float, sigma2: float) -> _Assembly:
    if not episodes:
        raise ContractViolation("need at least one episode")
    rows, cols, vals = [], [], []
    diag, sub = [], []
    rewards = []
    obs_parts, act_parts = [], []
    r0 = c0 = 0
    for ep in episodes:
        t_e = len(ep)
        if t_e < 1:
            raise ContractViolation("episodes must contain at least one step")
        obs_parts.append(np.asarray(ep.obs))
        act_parts.append(np.asarray(ep.actions))
        n_cols = t_e
        if ep.truncated:
            if ep.boundary_obs is None or ep.boundary_action is None:
                raise ContractViolation("truncated episode is missing its boundary pair")
            obs_parts.append(np.asarray(ep.boundary_obs)[None, ...])
            act_parts.append(np.asarray([ep.boundary_action]))
            n_cols = t_e + 1
        i = np.arange(t_e)
        rows.append(r0 + i)
        cols.append(c0 + i)
        vals.append(np.ones(t_e))
        n_off = t_e if ep.truncated else t_e - 1  # every row couples forward except an episodic tail
        rows.append(r0 + np.arange(n_off))
        cols.append(c0 + np.arange(1, n_off + 1))
        vals.append(np.full(n_off, -gamma))
        d = np.full(t_e, sigma2 * (1.0 + gamma**2))
        if not ep.truncated:
            d[-1] = sigma2
        s = np.full(t_e, -sigma2 * gamma)
        s[-1] = 0.0  # no coupling across block boundaries
        diag.append(d)
        sub.append(s)
        rewards.append(np.asarray(ep.rewards, dtype=float))
        r0 += t_e
        c0 += n_cols
    h = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r0, c0)
    )
    banded = None
    if sigma2 > 0:
        banded = np.stack([np.concatenate(diag), np.concatenate(sub)])
    return _Assembly(
        h,
        np.concatenate(rewards),
        banded,
        np.concatenate(obs_parts, axis=0),
        np.concatenate(act_parts),
    )


def _banded_solve(banded: np.ndarray, b: np.ndarray) -> np.ndarray:
    if banded.shape[1] == 1:  # single observation; scipy's ptsv rejects t = 1
        return np.asarray(b, dtype=float) / banded[0, 0]
    return sla.solveh_banded(banded, b, lower=True)


class GptdPosterior:
    """Posterior over action values: coefficients alpha and matrix C on a basis."""

    def __init__(
        self,
        kernel: CompositeKernel,
        gamma: float,
        sigma2: float,
        data: KernelData,
        alpha: np.ndarray,
        c_apply: Callable[[np.ndarray], np.ndarray],
        c_dense: Optional[np.ndarray] = None,
        dictionary: Optional[OnlineDictionary] = None,
        n_observations: int = 0,
    ):
        self.kernel = kernel
        self.gamma = gamma
        self.sigma2 = sigma2
        self.data = data  # kernel precomputation over the basis
        self.alpha = alpha
        self._c_apply = c_apply
        self._c_dense = c_dense
        self.dictionary = dictionary
        self.n_observations = n_observations

    @property
    def basis_obs(self) -> np.ndarray:
        return self.data.obs

    @property
    def basis_actions(self) -> np.ndarray:
        return self.data.actions

    @property
    def basis_size(self) -> int:
        return self.data.size

    @classmethod
    def empty(cls, kernel: CompositeKernel, gamma: float, sigma2: float,
              obs_shape: tuple = ()) -> "GptdPosterior":
        """Posterior with no observations: prior moments everywhere."""
        no_obs = np.zeros((0,) + tuple(obs_shape))
        data = kernel.prepare(no_obs, np.zeros(0, dtype=int))
        return cls(kernel, gamma, sigma2, data, np.zeros(0),
                   lambda x: np.zeros_like(x), np.zeros((0, 0)), n_observations=0)

    @property
    def C(self) -> np.ndarray:
        if self._c_dense is None:
            if self.basis_size > 4000:
                raise ContractViolation("C too large to materialize; use c_matmul")
            self._c_dense = sym(self.c_matmul(np.eye(self.basis_size)))
        return self._c_dense

    def c_matmul(self, x: np.ndarray) -> np.ndarray:
        if self._c_dense is not None:
            return self._c_dense @ x
        return self._c_apply(x)

    def cross_to(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Kernel vectors k(z) between the basis and query pairs, (N, Q)."""
        u_q = self.kernel.scores(obs, actions)
        kx = self.kernel.state_kernel.gram(self.data.mapped, self.kernel._mapped(np.asarray(obs)))
        if self.data.V is not None:
            kf = self.data.V.T @ (u_q.toarray() if sp.issparse(u_q) else u_q)
        else:
            kf = self.kernel.fisher.kf_cross(self.data.U, u_q)
        return kx + self.kernel.fisher_weight * np.asarray(kf), u_q

    def q_batch(self, obs: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of Q at query pairs."""
        kt, u_q = self.cross_to(obs, actions)
        mean = kt.T @ self.alpha
        prior_diag = 1.0 + self.kernel.fisher_weight * self.kernel.fisher.kf_diag(u_q)
        quad = np.einsum("nq,nq->q", kt, self.c_matmul(kt))
        var = prior_diag - quad
        bad = var < -np.maximum(1e-10, 1e-13 * np.abs(prior_diag))
        if np.any(bad):
            raise NumericalInconsistency("negative posterior variance beyond tolerance")
        return mean, np.maximum(var, 0.0)

    def q_value(self, obs, action) -> tuple[float, float]:
        o = np.asarray(obs)
        mean, var = self.q_batch(o.reshape((1,) + o.shape), np.asarray([action]))
        return float(mean[0]), float(var[0])


def q_posterior(posterior: GptdPosterior, obs, action) -> tuple[float, float]:
    return posterior.q_value(obs, action)


def gptd_fit(
    episodes: list[Episode], kernel: CompositeKernel, sigma2: float, gamma: float
) -> GptdPosterior:
    """Exact batch posterior over all visited state-action pairs."""
    if sigma2 < 0:
        raise ParameterDomainError("sigma2 must be nonnegative")
    asm = _assemble(episodes, gamma, sigma2)
    data = kernel.prepare(asm.basis_obs, asm.basis_actions)
    n_basis = data.size

    # low-rank factor of K over distinct points: K = Z Z^T exactly
    uid = _unique_ids(asm.basis_obs, asm.basis_actions)
    uniq_first = np.sort(np.unique(uid, return_index=True)[1])
    relabel = {uid[i]: k for k, i in enumerate(uniq_first)}
    uid = np.array([relabel[g] for g in uid])
    kd = data.cross(uniq_first, uniq_first)
    l, _ = chol_lower(kd, 0.0)
    z = l[uid]  # (N, d)
    hz = np.asarray(asm.h @ z)
    t = asm.h.shape[0]

    if asm.sigma_banded is None:
        gram = CholFactor(hz @ hz.T)  # small t only; sigma2 == 0 test path

        def p_apply(y: np.ndarray) -> np.ndarray:
            return gram.solve(y)

    else:
        w = _banded_solve(asm.sigma_banded, hz)
        s_factor = CholFactor(np.eye(z.shape[1]) + hz.T @ w)

        def p_apply(y: np.ndarray) -> np.ndarray:
            return _banded_solve(asm.sigma_banded, y) - w @ s_factor.solve(w.T @ y)

    alpha = asm.h.T @ p_apply(asm.rewards)

    def c_apply(x: np.ndarray) -> np.ndarray:
        return asm.h.T @ p_apply(np.asarray(asm.h @ x))

    c_dense = None
    if n_basis <= 600:
        c_dense = sym(c_apply(np.eye(n_basis)))
    return GptdPosterior(kernel, gamma, sigma2, data, np.asarray(alpha), c_apply, c_dense,
                         n_observations=t)


def gptd_fit_sparse(
    episodes: list[Episode],
    kernel: CompositeKernel,
    sigma2: float,
    gamma: float,
    tau: float,
) -> GptdPosterior:
    """Online-sparsified posterior over a dictionary of state-action pairs."""
    if sigma2 <= 0:
        raise ParameterDomainError("the sparsified fit needs sigma2 > 0")
    asm = _assemble(episodes, gamma, sigma2)
    data = kernel.prepare(asm.basis_obs, asm.basis_actions)
    n_basis = data.size
    kdiag = data.diag()

    d = OnlineDictionary(tau)
    pos = 0
    while pos < n_basis:
        hi = min(pos + DICT_CHUNK, n_basis)
        chunk = np.arange(pos, hi)
        members = np.asarray(d.member_positions, dtype=int)
        kcross = data.cross(members, chunk)
        off = 0
        while off < len(chunk):
            consumed = d.offer_block(kdiag[chunk[off:]], kcross[:, off:])
            off += consumed
            if off < len(chunk) and d.size > kcross.shape[0]:
                new_row = data.cross(np.asarray([d.member_positions[-1]]), chunk)
                kcross = np.vstack([kcross, new_row])
        pos = hi

    members = np.asarray(d.member_positions, dtype=int)
    a = d.projection_matrix()  # (N, m)
    h_tilde = np.asarray(asm.h @ a)  # (t, m)
    m = d.size

    # push-through Woodbury: (H~ K~ H~^T + Sigma)^{-1} needs only
    # (I + K~ Q)^{-1}, whose eigenvalues are >= 1 for any PSD K~, Q
    w = _banded_solve(asm.sigma_banded, h_tilde)
    q = h_tilde.T @ w  # H~^T Sigma^{-1} H~
    inner = np.eye(m) + d.K @ q
    wr = h_tilde.T @ _banded_solve(asm.sigma_banded, asm.rewards)
    alpha = wr - q @ np.linalg.solve(inner, d.K @ wr)
    c_dense = sym(q - q @ np.linalg.solve(inner, d.K @ q))

    dict_data = kernel.prepare(asm.basis_obs[members], asm.basis_actions[members])
    return GptdPosterior(
        kernel, gamma, sigma2, dict_data, alpha, c_dense.__matmul__, c_dense,
        dictionary=d, n_observations=asm.h.shape[0],
    )


def _unique_ids(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Group identical state-action pairs (exact duplicates only)."""
    seen: dict[bytes, int] = {}
    out = np.empty(len(actions), dtype=np.int64)
    o = np.ascontiguousarray(obs)
    act = np.ascontiguousarray(actions)
    for i in range(len(actions)):
        key = o[i].tobytes() + act[i].tobytes()
        out[i] = seen.setdefault(key, len(seen))
    return out
