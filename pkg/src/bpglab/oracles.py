"""Ground-truth values and error metrics used by tests and the harness.

Three oracle families live here:

* closed-form bandit gradients;
* an exact solver for small tabular MDPs (value functions, discounted
  occupancies, the policy-gradient sum, and the exact Fisher matrix);
* closed-form moments for the scalar LQR benchmark via the second-moment
  recursion of the linear system, which reproduces the known optimum
  0.3067 and cross-checks the frozen Monte-Carlo gradient fixture.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from bpglab.envs import Lqr
from bpglab.errors import ContractViolation
from bpglab.policies import PolicyFamily, lqr_squash, lqr_squash_jacobian


# ---------------------------------------------------------------------------
# error metrics

def angular_error_deg(g_est: np.ndarray, g_true: np.ndarray) -> float:
    """Absolute angle between two gradient vectors, in degrees (scale-free)."""
    a = np.asarray(g_est, dtype=float).ravel()
    b = np.asarray(g_true, dtype=float).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ContractViolation("angular error undefined for a zero vector")
    c = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return math.degrees(math.acos(c))


def mse(g_est: np.ndarray, g_true: np.ndarray) -> float:
    a = np.asarray(g_est, dtype=float).ravel()
    b = np.asarray(g_true, dtype=float).ravel()
    if a.shape != b.shape:
        raise ContractViolation("mse: length mismatch")
    return float(np.sum((a - b) ** 2))


# ---------------------------------------------------------------------------
# bandit

def exact_gradient_bandit(reward_kind: str, theta) -> np.ndarray:
    """Gradient of the expected reward for actions ~ Normal(theta1, theta2^2)."""
    t1, t2 = np.asarray(theta, dtype=float).ravel()
    if t2 <= 0:
        raise ContractViolation("bandit oracle requires theta2 > 0")
    if reward_kind == "linear":  # E[a] = theta1
        return np.array([1.0, 0.0])
    if reward_kind == "quadratic":  # E[a^2] = theta1^2 + theta2^2
        return np.array([2.0 * t1, 2.0 * t2])
    raise ContractViolation(f"unknown bandit reward kind {reward_kind!r}")


def exact_return_bandit(reward_kind: str, theta) -> float:
    t1, t2 = np.asarray(theta, dtype=float).ravel()
    return t1 if reward_kind == "linear" else t1 * t1 + t2 * t2


# ---------------------------------------------------------------------------
# tabular MDPs

@dataclass
class DiscreteMdp:
    """Tabular MDP: transition tensor P[s, a, s'], mean rewards, start law."""

    P: np.ndarray
    rbar: np.ndarray
    p0: np.ndarray
    absorbing: np.ndarray
    obs_of_state: np.ndarray  # observation fed to the policy for each state index


@dataclass
class DiscreteSolution:
    eta: float
    grad: np.ndarray
    Q: np.ndarray  # (S, A), zero rows at absorbing states
    V: np.ndarray  # (S,)
    nu: np.ndarray  # (S,) discounted state weighting (unnormalized)
    pi: np.ndarray  # (S, A) discounted state-action weighting
    probs: np.ndarray  # (S, A) policy


def exact_discrete(mdp: DiscreteMdp, family: PolicyFamily, theta, gamma: float) -> DiscreteSolution:
    """Exact eta, grad eta, Q, and occupancies for a tabular MDP by linear solves."""
    theta = family.validate_theta(theta)
    S, A, _ = mdp.P.shape
    live = ~mdp.absorbing
    probs = np.zeros((S, A))
    probs[live] = family.action_probs(theta, mdp.obs_of_state[live])

    p_pol = np.einsum("sa,sat->st", probs, mdp.P)  # (S, S)
    r_pol = (probs * mdp.rbar).sum(axis=1)

    n_live = int(live.sum())
    idx = np.flatnonzero(live)
    p_ll = p_pol[np.ix_(idx, idx)]
    sys = np.eye(n_live) - gamma * p_ll
    v = np.zeros(S)
    v[idx] = np.linalg.solve(sys, r_pol[idx])

    q = np.zeros((S, A))
    q[idx] = mdp.rbar[idx] + gamma * np.einsum("sat,t->sa", mdp.P[idx], v)

    nu = np.zeros(S)
    nu[idx] = np.linalg.solve(sys.T, mdp.p0[idx])
    pi = nu[:, None] * probs

    eta = float(nu @ r_pol)

    # policy gradient sum: grad mu(a|s) = mu(a|s) * u(s, a)
    obs_rep = np.repeat(mdp.obs_of_state[idx], A, axis=0)
    act_rep = np.tile(np.arange(A), n_live)
    u = np.asarray(family.score_batch(theta, obs_rep, act_rep))
    weights = (pi[idx] * q[idx]).ravel()
    grad = u @ weights
    return DiscreteSolution(eta, grad, q, v, nu, pi, probs)


def discrete_fisher(mdp: DiscreteMdp, family: PolicyFamily, theta, gamma: float) -> np.ndarray:
    """Exact state-action Fisher matrix under the discounted weighting pi."""
    sol = exact_discrete(mdp, family, theta, gamma)
    S, A = sol.pi.shape
    live = np.flatnonzero(~mdp.absorbing)
    obs_rep = np.repeat(mdp.obs_of_state[live], A, axis=0)
    act_rep = np.tile(np.arange(A), len(live))
    u = np.asarray(family.score_batch(family.validate_theta(theta), obs_rep, act_rep))
    w = sol.pi[live].ravel()
    return (u * w) @ u.T


def walk_mdp(n_states: int = 10) -> DiscreteMdp:
    """The linear random walk as a tabular MDP (state i stored at index i-1)."""
    S, A = n_states, 2
    P = np.zeros((S, A, S))
    rbar = np.zeros((S, A))
    for i in range(S - 1):
        P[i, 0, max(i - 1, 0)] = 1.0  # left, retaining barrier at state 1
        P[i, 1, i + 1] = 1.0  # right
        rbar[i, :] = 1.0
    P[S - 1, :, S - 1] = 1.0  # absorbing
    p0 = np.zeros(S)
    p0[0] = 1.0
    absorbing = np.zeros(S, dtype=bool)
    absorbing[-1] = True
    return DiscreteMdp(P, rbar, p0, absorbing, np.arange(1, S + 1))


def walk_eta_star(gamma: float, n_states: int = 10) -> float:
    """Minimum expected discounted cost: go right every step, n-1 steps."""
    return float(sum(gamma**t for t in range(n_states - 1)))


# ---------------------------------------------------------------------------
# LQR closed forms (second-moment recursion of the scalar linear system)

LQR_T = 20
LQR_X0_MEAN = Lqr.INIT_MEAN
LQR_X0_VAR = Lqr.INIT_STD**2
LQR_NOISE_VAR = Lqr.NOISE_STD**2


def lqr_exact_return(lam: float, sigma: float) -> float:
    """Expected 20-step cost of the policy Normal(lambda*x, sigma^2)."""
    m = LQR_X0_MEAN**2 + LQR_X0_VAR
    total = 0.0
    for _ in range(LQR_T):
        total += (1.0 + 0.1 * lam * lam) * m + 0.1 * sigma * sigma
        m = (1.0 + lam) ** 2 * m + sigma * sigma + LQR_NOISE_VAR
    return total


def lqr_exact_grad(lam: float, sigma: float) -> np.ndarray:
    """Exact gradient of the 20-step cost w.r.t. (lambda, sigma)."""
    m = LQR_X0_MEAN**2 + LQR_X0_VAR
    dm_l = 0.0
    dm_s = 0.0
    g_l = 0.0
    g_s = 0.0
    c = 1.0 + 0.1 * lam * lam
    for _ in range(LQR_T):
        g_l += 0.2 * lam * m + c * dm_l
        g_s += c * dm_s + 0.2 * sigma
        dm_l = 2.0 * (1.0 + lam) * m + (1.0 + lam) ** 2 * dm_l
        dm_s = (1.0 + lam) ** 2 * dm_s + 2.0 * sigma
        m = (1.0 + lam) ** 2 * m + sigma * sigma + LQR_NOISE_VAR
    return np.array([g_l, g_s])


def lqr_exact_fisher(lam: float, sigma: float) -> np.ndarray:
    """Exact trajectory Fisher matrix in (lambda, sigma) coordinates."""
    m = LQR_X0_MEAN**2 + LQR_X0_VAR
    sum_m = 0.0
    for _ in range(LQR_T):
        sum_m += m
        m = (1.0 + lam) ** 2 * m + sigma * sigma + LQR_NOISE_VAR
    return np.diag([sum_m / sigma**2, 2.0 * LQR_T / sigma**2])


def lqr_exact_return_kappa(kappa) -> float:
    return lqr_exact_return(*lqr_squash(kappa))


def lqr_exact_grad_kappa(kappa) -> np.ndarray:
    return lqr_squash_jacobian(kappa) * lqr_exact_grad(*lqr_squash(kappa))


def lqr_exact_fisher_kappa(kappa) -> np.ndarray:
    j = lqr_squash_jacobian(kappa)
    return np.diag(j) @ lqr_exact_fisher(*lqr_squash(kappa)) @ np.diag(j)


LQR_OPT_RETURN = 0.3067  # value at the known optimum (lambda ~ -0.92, sigma -> 0.001)


# ---------------------------------------------------------------------------
# frozen high-precision MC gradient fixture for the LQR reference point

FIXTURE_NAME = "lqr_exact_gradient.csv"
FIXTURE_POINT = (-0.2, 1.0)  # (lambda, sigma) of the gradient-comparison experiments
FIXTURE_SEED = 202401
FIXTURE_PATHS = 10**6


@dataclass
class GradientFixture:
    value: np.ndarray
    stderr: np.ndarray
    seed: int
    samples: int


def generate_lqr_gradient_fixture(path: Optional[Path] = None, n_paths: int = FIXTURE_PATHS,
                                  seed: int = FIXTURE_SEED, chunk: int = 10**5) -> GradientFixture:
    """Recompute the frozen MC reference gradient (mean of R * u over paths)."""
    from bpglab.policies import make_policy
    from bpglab.rollout import rollout_paths

    env = Lqr()
    fam = make_policy("lqr-gauss-raw")
    theta = np.array(FIXTURE_POINT)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    total = np.zeros(2)
    total_sq = np.zeros(2)
    done = 0
    while done < n_paths:
        b = min(chunk, n_paths - done)
        ps = rollout_paths(env, fam, theta, b, rng)
        contrib = ps.scores * ps.returns  # (2, b)
        total += contrib.sum(axis=1)
        total_sq += (contrib**2).sum(axis=1)
        done += b
    value = total / n_paths
    var = total_sq / n_paths - value**2
    stderr = np.sqrt(var / n_paths)
    fixture = GradientFixture(value, stderr, seed, n_paths)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "value", "stderr", "seed", "samples"])
            for i in range(2):
                w.writerow([i, repr(float(value[i])), repr(float(stderr[i])), seed, n_paths])
    return fixture


def load_lqr_gradient_fixture() -> GradientFixture:
    ref = resources.files("bpglab").joinpath("data").joinpath(FIXTURE_NAME)
    with ref.open("r") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["component"]))
    value = np.array([float(r["value"]) for r in rows])
    stderr = np.array([float(r["stderr"]) for r in rows])
    return GradientFixture(value, stderr, int(rows[0]["seed"]), int(rows[0]["samples"]))
