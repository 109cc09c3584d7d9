"""Parametric stochastic policies with hand-derived score functions.

Each family exposes batch sampling, the exact gradient of the log density
(``score_batch``), and the log density itself (used by the finite-difference
checks).  All scores are closed forms; there is no automatic differentiation
anywhere in the package.

Families (selected by name):

``gauss-meanstd``      actions ~ Normal(theta1, theta2^2), observation ignored.
``lqr-gauss-raw``      actions ~ Normal(lambda * x, sigma^2) with theta = (lambda, sigma).
``lqr-gauss``          same family in unconstrained kappa-space; the squashing
                       maps keep (lambda, sigma) in a safe range and gradients
                       are chain-ruled through the squash.
``walk-logistic``      per-state logistic choice between left and right.
``mc-softmax-rbf``     softmax over 3 actions with 16 Gaussian features on the
                       unit square (mountain car).
``ship-cmac-gauss``    CMAC tile-coded Gaussian with a sigmoid output transform
                       (ship steering); scores use the documented approximation
                       grad log mu(a|x) ~= grad log mu(a_pre|x) at the
                       pre-squash action.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy import sparse as sp
from scipy.special import expit, logsumexp

from bpglab.envs import MountainCar, Trajectory
from bpglab.errors import ContractViolation, ParameterDomainError

LOG_2PI = math.log(2.0 * math.pi)


class PolicyFamily:
    name: str = "?"
    dim: int = 0
    n_actions: Optional[int] = None  # discrete families only
    sparse_scores: bool = False

    def validate_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (self.dim,):
            raise ParameterDomainError(f"{self.name}: expected {self.dim} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ParameterDomainError(f"{self.name}: non-finite parameters")
        return theta

    def init_theta(self) -> np.ndarray:
        return np.zeros(self.dim)

    def sample_batch(self, theta, obs, rng) -> np.ndarray:
        raise NotImplementedError

    def score_batch(self, theta, obs, actions):
        """Gradient of log density, shape ``(dim, B)`` (sparse for tile codes)."""
        raise NotImplementedError

    def log_density_batch(self, theta, obs, actions) -> np.ndarray:
        raise NotImplementedError

    def action_probs(self, theta, obs) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no discrete action set")


def sample_action(family: PolicyFamily, theta, obs, rng):
    a = family.sample_batch(family.validate_theta(theta), _batch_obs(obs), rng)
    return a[0].item() if np.ndim(a[0]) == 0 else a[0]

def score(family: PolicyFamily, theta, obs, action) -> np.ndarray:
    u = family.score_batch(family.validate_theta(theta), _batch_obs(obs), np.asarray([action]))
    if sp.issparse(u):
        u = u.toarray()
    return np.asarray(u)[:, 0]


def trajectory_score(family: PolicyFamily, theta, trajectory: Trajectory) -> np.ndarray:
    """Sum of per-step scores; POMDP trajectories score their observations."""
    theta = family.validate_theta(theta)
    if trajectory.observations is not None:
        obs = _stack_obs(trajectory.observations)
    else:
        obs = _stack_obs([tr.state for tr in trajectory.transitions])
    actions = np.asarray([tr.action for tr in trajectory.transitions])
    u = family.score_batch(theta, obs, actions)
    if sp.issparse(u):
        return np.asarray(u.sum(axis=1)).ravel()
    return u.sum(axis=1)


def _batch_obs(obs) -> np.ndarray:
    arr = np.asarray(obs)
    return arr.reshape((1,) + arr.shape)

def _stack_obs(obs_list) -> np.ndarray:
    return np.stack([np.asarray(o) for o in obs_list], axis=0)


class GaussMeanStd(PolicyFamily):
    """Normal(theta1, theta2^2), the single-state bandit family."""

    name = "gauss-meanstd"
    dim = 2

    def validate_theta(self, theta):
        theta = super().validate_theta(theta)
        if theta[1] <= 0:
            raise ParameterDomainError("gauss-meanstd: standard deviation must be positive")
        return theta

    def init_theta(self):
        return np.array([0.0, 1.0])

    def sample_batch(self, theta, obs, rng):
        return theta[0] + theta[1] * rng.standard_normal(len(obs))

    def score_batch(self, theta, obs, actions):
        mu, s = theta
        d = np.asarray(actions, dtype=float) - mu
        return np.stack([d / s**2, (d * d - s**2) / s**3])

    def log_density_batch(self, theta, obs, actions):
        mu, s = theta
        d = np.asarray(actions, dtype=float) - mu
        return -0.5 * (d / s) ** 2 - math.log(s) - 0.5 * LOG_2PI

    def analytic_fisher(self, theta) -> np.ndarray:
        mu, s = self.validate_theta(theta)
        return np.diag([1.0 / s**2, 2.0 / s**2])


class LqrGaussRaw(PolicyFamily):
    """Normal(lambda * x, sigma^2) parameterized directly by (lambda, sigma)."""

    name = "lqr-gauss-raw"
    dim = 2

    def validate_theta(self, theta):
        theta = super().validate_theta(theta)
        if theta[1] <= 0:
            raise ParameterDomainError("lqr-gauss-raw: sigma must be positive")
        return theta

    def sample_batch(self, theta, obs, rng):
        lam, sig = theta
        return lam * np.asarray(obs, dtype=float) + sig * rng.standard_normal(len(obs))

    def score_batch(self, theta, obs, actions):
        lam, sig = theta
        x = np.asarray(obs, dtype=float)
        d = np.asarray(actions, dtype=float) - lam * x
        return np.stack([d * x / sig**2, (d * d - sig**2) / sig**3])

    def log_density_batch(self, theta, obs, actions):
        lam, sig = theta
        d = np.asarray(actions, dtype=float) - lam * np.asarray(obs, dtype=float)
        return -0.5 * (d / sig) ** 2 - math.log(sig) - 0.5 * LOG_2PI


def lqr_squash(kappa: np.ndarray) -> tuple[float, float]:
    """Map unconstrained (kappa1, kappa2) to (lambda, sigma)."""
    k = np.asarray(kappa, dtype=float).ravel()
    lam = -1.999 + 1.998 * expit(-k[0])
    sig = 0.001 + expit(-k[1])
    return float(lam), float(sig)


def lqr_squash_jacobian(kappa: np.ndarray) -> np.ndarray:
    k = np.asarray(kappa, dtype=float).ravel()
    dlam = -1.998 * expit(-k[0]) * expit(k[0])
    dsig = -expit(-k[1]) * expit(k[1])
    return np.array([dlam, dsig])


def lqr_unsquash(lam: float, sig: float) -> np.ndarray:
    """Inverse of :func:`lqr_squash`; arguments must be interior to the range."""
    q1 = (lam + 1.999) / 1.998
    q2 = sig - 0.001
    if not (0 < q1 < 1 and 0 < q2 < 1):
        raise ParameterDomainError("(lambda, sigma) outside the squash range")
    return np.array([math.log((1 - q1) / q1), math.log((1 - q2) / q2)])


class LqrGaussSquashed(PolicyFamily):
    """The LQR family in unconstrained kappa-space (used for optimization)."""

    name = "lqr-gauss"
    dim = 2

    def sample_batch(self, theta, obs, rng):
        lam, sig = lqr_squash(theta)
        return lam * np.asarray(obs, dtype=float) + sig * rng.standard_normal(len(obs))

    def score_batch(self, theta, obs, actions):
        lam, sig = lqr_squash(theta)
        raw = LqrGaussRaw.score_batch(self, np.array([lam, sig]), obs, actions)
        return lqr_squash_jacobian(theta)[:, None] * raw

    def log_density_batch(self, theta, obs, actions):
        lam, sig = lqr_squash(theta)
        return LqrGaussRaw.log_density_batch(self, np.array([lam, sig]), obs, actions)


class WalkLogistic(PolicyFamily):
    """P(right | x) = expit(theta_x), one independent parameter per state."""

    name = "walk-logistic"
    n_actions = 2  # 0 = left, 1 = right

    def __init__(self, n_states: int = 10):
        self.n_states = int(n_states)
        self.dim = self.n_states

    def action_probs(self, theta, obs):
        p = expit(theta[np.asarray(obs, dtype=np.int64) - 1])
        return np.stack([1.0 - p, p], axis=1)

    def sample_batch(self, theta, obs, rng):
        p = expit(theta[np.asarray(obs, dtype=np.int64) - 1])
        return (rng.random(len(p)) < p).astype(np.int64)

    def score_batch(self, theta, obs, actions):
        idx = np.asarray(obs, dtype=np.int64) - 1
        a = np.asarray(actions, dtype=np.int64)
        p = expit(theta[idx])
        u = np.zeros((self.dim, len(idx)))
        u[idx, np.arange(len(idx))] = np.where(a == 1, 1.0 - p, -p)
        return u

    def log_density_batch(self, theta, obs, actions):
        z = theta[np.asarray(obs, dtype=np.int64) - 1]
        a = np.asarray(actions, dtype=np.int64)
        # log expit(z) for right, log expit(-z) for left, in a stable form
        return -np.logaddexp(0.0, np.where(a == 1, -z, z))


class McSoftmaxRbf(PolicyFamily):
    """Softmax over 3 thrusts with 16 Gaussian features on the unit square.

    The grid {0, 0.25, 0.5, 1}^2 is intentionally uneven and the feature
    width is 1.3 * 0.25; raw (position, velocity) states are mapped to the
    unit square before the features are evaluated.
    """

    name = "mc-softmax-rbf"
    n_actions = 3
    GRID = np.array([0.0, 0.25, 0.5, 1.0])
    WIDTH = 1.3 * 0.25

    def __init__(self):
        gx, gv = np.meshgrid(self.GRID, self.GRID, indexing="ij")
        self.centers = np.stack([gx.ravel(), gv.ravel()], axis=1)  # (16, 2)
        self.n_features = 16
        self.dim = self.n_actions * self.n_features

    def features(self, obs) -> np.ndarray:
        unit = MountainCar.to_unit_square(np.asarray(obs, dtype=float))
        d2 = ((unit[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * self.WIDTH**2))

    def _logits(self, theta, phi):
        return phi @ theta.reshape(self.n_actions, self.n_features).T  # (B, 3)

    def action_probs(self, theta, obs):
        logits = self._logits(theta, self.features(obs))
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def sample_batch(self, theta, obs, rng):
        probs = self.action_probs(theta, obs)
        cdf = np.cumsum(probs, axis=1)
        rv = rng.random(len(probs))
        return np.minimum((rv[:, None] >= cdf).sum(axis=1), self.n_actions - 1).astype(np.int64)

    def score_batch(self, theta, obs, actions):
        phi = self.features(obs)
        probs = self.action_probs(theta, obs)
        a = np.asarray(actions, dtype=np.int64)
        coeff = -probs  # (B, 3)
        coeff[np.arange(len(a)), a] += 1.0
        u = coeff[:, :, None] * phi[:, None, :]  # (B, 3, 16)
        return u.reshape(len(a), self.dim).T

    def log_density_batch(self, theta, obs, actions):
        logits = self._logits(theta, self.features(obs))
        a = np.asarray(actions, dtype=np.int64)
        return logits[np.arange(len(a)), a] - logsumexp(logits, axis=1)


class ShipCmacGauss(PolicyFamily):
    """CMAC tile-coded Gaussian policy with a sigmoid transform to [-15, 15] deg.

    Nine 4-d tilings of 5 x 5 x 36 x 5 tiles each (40500 parameters, at most
    nine active per state); tiling j is offset by j * width / 9 along every
    dimension.  Sampling draws a_pre ~ Normal(mean tile weight, 1) and squashes
    a = 15 * (2/pi) * arctan(pi/2 * a_pre).  Scores apply the documented
    approximation: the gradient is taken for the pre-squash Gaussian density.
    """

    name = "ship-cmac-gauss"
    sparse_scores = True
    N_TILINGS = 9
    SHAPE = (5, 5, 36, 5)
    LOWS = np.array([0.0, 0.0, -180.0, -15.0])
    HIGHS = np.array([150.0, 150.0, 180.0, 15.0])
    ACTION_LIMIT = 15.0

    def __init__(self):
        self.tiles_per_tiling = int(np.prod(self.SHAPE))
        self.dim = self.N_TILINGS * self.tiles_per_tiling
        self.widths = (self.HIGHS - self.LOWS) / np.array(self.SHAPE)
        # stagger grid origins by width/9 per dimension per tiling
        self.offsets = np.outer(np.arange(self.N_TILINGS), self.widths / self.N_TILINGS)
        self.strides = np.array([
            self.SHAPE[1] * self.SHAPE[2] * self.SHAPE[3],
            self.SHAPE[2] * self.SHAPE[3],
            self.SHAPE[3],
            1,
        ])

    def active_tiles(self, obs) -> np.ndarray:
        """Indices of the nine active parameters for each state, shape (B, 9)."""
        s = np.asarray(obs, dtype=float)
        rel = s[:, None, :] - self.LOWS + self.offsets[None, :, :]  # (B, 9, 4)
        idx = np.floor(rel / self.widths).astype(np.int64)
        np.clip(idx, 0, np.asarray(self.SHAPE) - 1, out=idx)
        flat = (idx * self.strides).sum(axis=2)
        return flat + np.arange(self.N_TILINGS) * self.tiles_per_tiling

    def _mean(self, theta, tiles):
        return theta[tiles].sum(axis=1) / self.N_TILINGS

    @classmethod
    def squash_action(cls, a_pre):
        return cls.ACTION_LIMIT * (2.0 / math.pi) * np.arctan(0.5 * math.pi * np.asarray(a_pre, dtype=float))

    @classmethod
    def unsquash_action(cls, a):
        a = np.asarray(a, dtype=float)
        if np.any(np.abs(a) >= cls.ACTION_LIMIT):
            raise ContractViolation("ship action on or outside the open interval (-15, 15) has zero density")
        return (2.0 / math.pi) * np.tan(0.5 * math.pi * a / cls.ACTION_LIMIT)

    def sample_batch(self, theta, obs, rng):
        mean = self._mean(theta, self.active_tiles(obs))
        return self.squash_action(mean + rng.standard_normal(len(mean)))

    def score_batch(self, theta, obs, actions):
        tiles = self.active_tiles(obs)
        residual = self.unsquash_action(actions) - self._mean(theta, tiles)
        b = tiles.shape[0]
        data = np.repeat(residual / self.N_TILINGS, self.N_TILINGS)
        indptr = np.arange(b + 1) * self.N_TILINGS
        return sp.csc_matrix((data, tiles.ravel(), indptr), shape=(self.dim, b))

    def log_density_batch(self, theta, obs, actions):
        residual = self.unsquash_action(actions) - self._mean(theta, self.active_tiles(obs))
        return -0.5 * residual**2 - 0.5 * LOG_2PI


_REGISTRY = {
    "gauss-meanstd": GaussMeanStd,
    "lqr-gauss": LqrGaussSquashed,
    "lqr-gauss-raw": LqrGaussRaw,
    "walk-logistic": WalkLogistic,
    "mc-softmax-rbf": McSoftmaxRbf,
    "ship-cmac-gauss": ShipCmacGauss,
}


def policy_names() -> list[str]:
    return sorted(_REGISTRY)


def make_policy(name: str, **kwargs) -> PolicyFamily:
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ContractViolation(f"unknown policy family {name!r}; known: {policy_names()}") from None
    return cls(**kwargs)
