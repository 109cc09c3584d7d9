"""State-action kernels for the critic: state kernel plus Fisher kernel.

The prior covariance between action values is k(z, z') = k_x(x, x') +
w * u(z)^T G^{-1} u(z'), an arbitrary positive-definite state kernel plus the
(reparameterization-invariant) Fisher kernel between state-action pairs.  A
:class:`KernelData` precomputes score matrices for a batch of pairs so gram
blocks reduce to matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse as sp

from bpglab.fisher import FisherInfo
from bpglab.policies import PolicyFamily


@dataclass
class GaussianStateKernel:
    """exp(-||x - x'||^2 / (2 sigma_k^2)) on (mapped) observations."""

    sigma_k: float

    def gram(self, obs_a: np.ndarray, obs_b: np.ndarray) -> np.ndarray:
        a = np.asarray(obs_a, dtype=float)
        b = np.asarray(obs_b, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if b.ndim == 1:
            b = b[:, None]
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * self.sigma_k**2))


class CompositeKernel:
    """k_x + w * k_F bound to a policy family, parameters, and Fisher matrix."""

    def __init__(
        self,
        state_kernel: GaussianStateKernel,
        family: PolicyFamily,
        theta: np.ndarray,
        fisher: FisherInfo,
        fisher_weight: float = 1.0,
        state_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.state_kernel = state_kernel
        self.family = family
        self.theta = family.validate_theta(theta)
        self.fisher = fisher
        self.fisher_weight = float(fisher_weight)
        self.state_map = state_map

    def _mapped(self, obs: np.ndarray) -> np.ndarray:
        return obs if self.state_map is None else self.state_map(obs)

    def scores(self, obs: np.ndarray, actions: np.ndarray):
        return self.family.score_batch(self.theta, obs, actions)

    def prepare(self, obs: np.ndarray, actions: np.ndarray) -> "KernelData":
        return KernelData(self, obs, actions)

    def cross(self, obs_a, act_a, obs_b, act_b) -> np.ndarray:
        kx = self.state_kernel.gram(self._mapped(obs_a), self._mapped(obs_b))
        kf = self.fisher.kf_cross(self.scores(obs_a, act_a), self.scores(obs_b, act_b))
        return kx + self.fisher_weight * np.asarray(kf)

    def __call__(self, obs_a, act_a, obs_b, act_b) -> float:
        pack = lambda o: np.asarray(o).reshape((1,) + np.asarray(o).shape)
        return float(self.cross(pack(obs_a), np.asarray([act_a]), pack(obs_b), np.asarray([act_b]))[0, 0])


class KernelData:
    """Precomputed scores (and their Fisher solves) for one batch of pairs."""

    def __init__(self, kernel: CompositeKernel, obs: np.ndarray, actions: np.ndarray):
        self.kernel = kernel
        self.obs = np.asarray(obs)
        self.actions = np.asarray(actions)
        self.mapped = kernel._mapped(self.obs)
        self.U = kernel.scores(self.obs, self.actions)
        self._dense = not sp.issparse(self.U)
        # for dense scores one Fisher solve serves every later gram block
        self.V = kernel.fisher.solve(self.U) if self._dense else None

    @property
    def size(self) -> int:
        return self.U.shape[1]

    def score_cols(self, idx) -> np.ndarray:
        return self.U[:, idx]

    def cross(self, ia, ib) -> np.ndarray:
        """Kernel block between point subsets ``ia`` and ``ib`` (index arrays)."""
        kx = self.kernel.state_kernel.gram(self.mapped[ia], self.mapped[ib])
        if self._dense:
            kf = self.U[:, ia].T @ self.V[:, ib]
        else:
            kf = self.kernel.fisher.kf_cross(self.U[:, ia], self.U[:, ib])
        return kx + self.kernel.fisher_weight * np.asarray(kf)

    def diag(self) -> np.ndarray:
        kx = np.ones(self.size)  # Gaussian state kernel has unit diagonal
        if self._dense:
            kf = np.einsum("nm,nm->m", self.U, self.V)
        else:
            kf = self.kernel.fisher.kf_diag(self.U)
        return kx + self.kernel.fisher_weight * kf
