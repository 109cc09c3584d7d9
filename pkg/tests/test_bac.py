"""Composite kernel, actor-critic gradient posterior, and the Alg-style loop."""

import numpy as np
import pytest

from bpglab.bac import BacKernelSpec, bac_gradient, bac_optimize, estimate_step_fisher
from bpglab.envs import make_env
from bpglab.fisher import FisherInfo, fisher_g_est
from bpglab.gptd import gptd_fit, gptd_fit_sparse
from bpglab.kernels import CompositeKernel, GaussianStateKernel
from bpglab.oracles import discrete_fisher, exact_discrete, walk_mdp
from bpglab.optimize import Schedule
from bpglab.policies import WalkLogistic, make_policy
from bpglab.rollout import Episode, rollout_episodes


def rng(seed=0):
    return np.random.default_rng(seed)


def test_composite_diag_at_least_state_kernel():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, 0.5)
    g = fisher_g_est(env, fam, theta, 100, 0.99, rng(1))
    kern = CompositeKernel(GaussianStateKernel(3.0), fam, theta, g, fisher_weight=0.5)
    val = kern(4, 1, 4, 1)
    assert val >= 1.0  # k_x(x, x) = 1 plus a nonnegative Fisher part
    assert kern(3, 0, 5, 1) == pytest.approx(kern(5, 1, 3, 0))  # symmetry


def test_walk_preset_kernel_parameters():
    spec = BacKernelSpec(3.0, 0.01)
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.zeros(10)
    g = fisher_g_est(env, fam, theta, 50, 0.99, rng(2))
    kern = spec.build(fam, theta, g)
    assert kern.state_kernel.sigma_k == 3.0
    assert kern.fisher_weight == 0.01
    # the state part follows exp(-|x - x'|^2 / (2 * 3^2))
    kx_only = np.exp(-((4 - 6) ** 2) / (2 * 9.0))
    assert kern(4, 1, 6, 1) == pytest.approx(
        kx_only + 0.01 * float(g.kf_cross(
            fam.score_batch(theta, np.array([4]), np.array([1])),
            fam.score_batch(theta, np.array([6]), np.array([1])),
        )[0, 0])
    )


class _Reparam(WalkLogistic):
    """mu'(a | x; theta') = mu(a | x; 2 theta'), an affine reparameterization."""

    def __init__(self, n_states=10):
        super().__init__(n_states)

    def action_probs(self, theta, obs):
        return super().action_probs(2.0 * np.asarray(theta), obs)

    def sample_batch(self, theta, obs, rng_):
        return super().sample_batch(2.0 * np.asarray(theta), obs, rng_)

    def score_batch(self, theta, obs, actions):
        return 2.0 * super().score_batch(2.0 * np.asarray(theta), obs, actions)

    def log_density_batch(self, theta, obs, actions):
        return super().log_density_batch(2.0 * np.asarray(theta), obs, actions)


def test_fisher_kernel_invariant_to_reparameterization():
    """k_F computed under theta and under theta' = theta / 2 agree to 1e-8.

    Exact Fisher matrices from the tabular oracle make the invariance exact up
    to solver round-off (estimated matrices would add sampling noise).  The
    absorbing state never contributes score mass, so its structurally zero
    diagonal entry is pinned to 1 to keep the exact matrices factorable.
    """
    base = make_policy("walk-logistic")
    re = _Reparam()
    mdp = walk_mdp(10)
    theta = np.linspace(-0.8, 0.9, 10)
    gamma = 0.95
    dead = np.zeros((10, 10))
    dead[9, 9] = 1.0  # untouched by every score vector
    g_base = FisherInfo(discrete_fisher(mdp, base, theta, gamma) + dead, "analytic")
    g_re = FisherInfo(discrete_fisher(mdp, re, theta / 2.0, gamma) + dead, "analytic")
    obs = np.repeat(np.arange(1, 10), 2)
    acts = np.tile([0, 1], 9)
    u_base = base.score_batch(theta, obs, acts)
    u_re = re.score_batch(theta / 2.0, obs, acts)
    kf_base = g_base.kf_cross(u_base, u_base)
    kf_re = g_re.kf_cross(u_re, u_re)
    assert np.max(np.abs(kf_base - kf_re)) < 1e-8
    assert g_base.jitter == 0.0  # exact matrices factor clean


def test_fisher_kernel_invariance_lqr_closed_form():
    from bpglab.oracles import lqr_exact_fisher
    from bpglab.policies import LqrGaussRaw

    class Scaled(LqrGaussRaw):
        name = "lqr-gauss-raw-scaled"

        def score_batch(self, theta, obs, actions):
            return 2.0 * super().score_batch(2.0 * np.asarray(theta), obs, actions)

    base = make_policy("lqr-gauss-raw")
    scaled = Scaled()
    theta = np.array([-0.2, 1.0])
    g_base = FisherInfo(lqr_exact_fisher(*theta), "analytic")
    g_re = FisherInfo(4.0 * lqr_exact_fisher(*theta), "analytic")
    obs = np.linspace(-1.0, 2.0, 7)
    acts = np.linspace(-1.5, 1.5, 7)
    kf_base = g_base.kf_cross(base.score_batch(theta, obs, acts),
                              base.score_batch(theta, obs, acts))
    kf_re = g_re.kf_cross(scaled.score_batch(theta / 2.0, obs, acts),
                          scaled.score_batch(theta / 2.0, obs, acts))
    assert np.max(np.abs(kf_base - kf_re)) < 1e-8


def test_empty_data_recovers_prior_gradient_moments():
    from bpglab.gptd import GptdPosterior

    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, 0.2)
    g = fisher_g_est(env, fam, theta, 100, 0.99, rng(3))
    kern = CompositeKernel(GaussianStateKernel(3.0), fam, theta, g, fisher_weight=0.7)
    critic = GptdPosterior.empty(kern, 0.99, 1.0)
    est = bac_gradient(critic)
    assert np.allclose(est.mean, 0.0)
    assert np.allclose(est.cov, 0.7 * g.dense(), atol=1e-10)


def test_zero_rewards_zero_gradient_mean():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, 0.2)
    g = fisher_g_est(env, fam, theta, 100, 0.99, rng(3))
    kern = CompositeKernel(GaussianStateKernel(3.0), fam, theta, g, fisher_weight=1.0)
    ep = Episode(obs=np.array([3, 4]), actions=np.array([1, 1]), rewards=np.zeros(2))
    critic = gptd_fit([ep], kern, 1.0, 0.99)
    est = bac_gradient(critic)
    assert np.allclose(est.mean, 0.0)  # mean is linear in the rewards
    w = np.linalg.eigvalsh(g.dense() - est.cov)
    assert w.min() > -1e-9  # observations only tighten the posterior


def test_cov_trace_bounded_by_fisher_trace():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, np.log(41 / 9))
    eps = rollout_episodes(env, fam, theta, 25, rng(4))
    g = fisher_g_est(env, fam, theta, 100, 0.99, rng(5))
    kern = CompositeKernel(GaussianStateKernel(0.6), fam, theta, g, fisher_weight=1.0)
    critic = gptd_fit_sparse(eps, kern, 1.0, 0.99, 1e-9)
    est = bac_gradient(critic)
    assert np.trace(est.cov) <= np.trace(g.dense()) + 1e-9
    w = np.linalg.eigvalsh(est.cov)
    assert w.min() >= -1e-10


def test_sparse_matches_dense_gradient():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, np.log(41 / 9))
    eps = rollout_episodes(env, fam, theta, 20, rng(6))
    g = fisher_g_est(env, fam, theta, 200, 0.99, rng(7))
    kern = CompositeKernel(GaussianStateKernel(0.6), fam, theta, g, fisher_weight=1.0)
    dense = bac_gradient(gptd_fit(eps, kern, 1.0, 0.99))
    sparse = bac_gradient(gptd_fit_sparse(eps, kern, 1.0, 0.99, 1e-12))
    assert np.max(np.abs(dense.mean - sparse.mean)) < 1e-6
    assert np.max(np.abs(dense.cov - sparse.cov)) < 1e-6


def test_rank_one_dictionary_gradient_parallel_to_score():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.zeros(10)
    g = fisher_g_est(env, fam, theta, 50, 0.99, rng(8))
    kern = CompositeKernel(GaussianStateKernel(3.0), fam, theta, g, fisher_weight=1.0)
    ep = Episode(obs=np.full(5, 4), actions=np.ones(5, dtype=int), rewards=np.ones(5))
    critic = gptd_fit_sparse([ep], kern, 1.0, 0.9, 1e-10)
    assert critic.dictionary.size == 1
    est = bac_gradient(critic)
    u1 = fam.score_batch(theta, np.array([4]), np.array([1]))[:, 0]
    cross = np.outer(est.mean, u1) - np.outer(u1, est.mean)
    assert np.max(np.abs(cross)) < 1e-12  # parallel vectors


def test_bac_optimize_zero_delta_stops_immediately():
    env = make_env("randomwalk", reward_noise_std=0.0)

    class ZeroRewardWalk(type(env)):
        def step_batch(self, states, actions, rng_):
            nxt, r, term, succ = super().step_batch(states, actions, rng_)
            return nxt, np.zeros_like(r), term, succ

    zenv = ZeroRewardWalk()
    fam = make_policy("walk-logistic")
    res = bac_optimize(zenv, fam, np.full(10, 3.0), 10, 5, Schedule(1.0), rng(9),
                       BacKernelSpec(3.0, 0.01), sigma2=1.0, tau=1e-3, gamma=0.99,
                       fisher="state-action-avg", epsilon=1e-9)
    assert res.stopped_early
    assert np.allclose(res.theta, np.full(10, 3.0))


def test_bac_optimize_learns_on_walk():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    mdp = walk_mdp(10)
    res = bac_optimize(env, fam, np.zeros(10), 40, 25, Schedule(5.0), rng(10),
                       BacKernelSpec(3.0, 0.01), sigma2=200.0, tau=1e-3, gamma=0.99,
                       fisher="state-action-avg", direction=-1.0, max_steps=600)
    before = exact_discrete(mdp, fam, np.zeros(10), 0.99).eta
    after = exact_discrete(mdp, fam, res.theta, 0.99).eta
    assert after < before  # cost strictly reduced


def test_estimate_step_fisher_variants():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.zeros(10)
    eps = rollout_episodes(env, fam, theta, 10, rng(11))
    info = estimate_step_fisher("state-action-avg", env, fam, theta, 10, 0.99, rng(12), eps)
    assert info.method == "state-action-avg"
    fixed = FisherInfo(np.eye(10), "analytic")
    assert estimate_step_fisher(fixed, env, fam, theta, 10, 0.99, rng(13), eps) is fixed
