"""BPG models: kernels, closed-form priors, noise, posteriors, sparsification."""

import numpy as np
import pytest

from bpglab.bpg import (
    bpg_eval_from_paths,
    bpg_eval_sparse_from_paths,
    bpg_optimize,
    closed_form_prior,
    noise_cov,
    score_dictionary,
    traj_kernel,
    traj_kernel_gram,
)
from bpglab.envs import make_env
from bpglab.errors import ContractViolation
from bpglab.fisher import FisherInfo, fisher_analytic, fisher_traj_mc
from bpglab.optimize import Schedule
from bpglab.policies import make_policy
from bpglab.rollout import PathStats, rollout_paths
from bpglab.sparsify import OnlineDictionary


def rng(seed=0):
    return np.random.default_rng(seed)


def stats_of(scores, returns):
    scores = np.asarray(scores, dtype=float)
    m = scores.shape[1]
    return PathStats(scores, np.asarray(returns, dtype=float), np.ones(m, dtype=int),
                     np.zeros(m, dtype=bool), np.zeros(m, dtype=bool), 1.0)


def identity_fisher(n=2):
    return FisherInfo(np.eye(n), "analytic")


def test_traj_kernel_values():
    g = FisherInfo(np.diag([1.0, 2.0]), "analytic")
    assert traj_kernel(np.zeros(2), np.zeros(2), g, "bq1") == pytest.approx(1.0)
    u = np.array([1.0, 0.0])
    assert traj_kernel(u, u, g, "bq1") == pytest.approx(4.0, rel=1e-4)
    assert traj_kernel(np.array([1.0, 0.0]), np.array([0.0, 1.0]), identity_fisher(), "bq2") == pytest.approx(0.0, abs=1e-9)


def test_closed_form_prior_values():
    g = FisherInfo(np.diag([1.0, 2.0]), "analytic")
    u = np.array([[1.0, 0.0], [0.0, 1.0]])
    prior = closed_form_prior("bq1", u, g)
    assert prior.b0 == 3.0  # 1 + n
    assert prior.b[0] == pytest.approx(2.0, rel=1e-5)  # 1 + u G^-1 u
    assert prior.b[1] == pytest.approx(1.5, rel=1e-5)
    prior2 = closed_form_prior("bq2", u, g)
    assert np.allclose(prior2.B, u)
    assert np.allclose(prior2.B0, np.diag([1.0, 2.0]))


def test_noise_cov_model2_and_model1():
    u = np.array([[2.0, 0.5], [1.0, -1.0]])
    kd = np.ones(2)
    sig2 = noise_cov("bq2", 20, 1.0, u, kd)
    assert np.allclose(sig2, 20.0)  # T sigma_r^2 I exactly when noise is present
    sig1 = noise_cov("bq1", 20, 1.0, u, kd)
    floor = 1e-4
    assert sig1[0][0] == pytest.approx(20.0 * 4.0 + floor)
    assert sig1[1][1] == pytest.approx(20.0 * 1.0 + floor)
    sig0 = noise_cov("bq2", 20, 0.0, u, 10 * kd)
    assert np.allclose(sig0, 1e-4 * 10.0)  # pure jitter floor when deterministic


def test_bq2_single_path_closed_form():
    st = stats_of([[1.0], [0.0]], [3.0])
    est = bpg_eval_from_paths(st, identity_fisher(), "bq2", 0.0)
    assert np.allclose(est.mean, [3.0, 0.0], atol=2e-3)
    assert np.allclose(est.cov, np.diag([0.0, 1.0]), atol=2e-3)


def test_bandit_quadratic_reward_mean():
    env = make_env("bandit-quadratic")
    fam = make_policy("gauss-meanstd")
    g = fisher_analytic(fam, [0.0, 1.0])
    rng_ = rng(11)
    means = np.array([
        bpg_eval_from_paths(rollout_paths(env, fam, [0.0, 1.0], 100, rng_), g, "bq1").mean
        for _ in range(200)
    ])
    avg = means.mean(axis=0)
    assert abs(avg[0] - 0.0) < 0.05
    assert abs(avg[1] - 2.0) < 0.05


def test_posterior_mean_linear_in_returns():
    env = make_env("bandit-linear")
    fam = make_policy("gauss-meanstd")
    stats = rollout_paths(env, fam, [0.0, 1.0], 25, rng(1))
    g = fisher_analytic(fam, [0.0, 1.0])
    for model in ("bq1", "bq2"):
        base = bpg_eval_from_paths(stats, g, model)
        st2 = stats_of(stats.scores, 2.5 * stats.returns)
        scaled = bpg_eval_from_paths(st2, g, model)
        assert np.allclose(scaled.mean, 2.5 * base.mean, atol=1e-8)


def test_model1_cov_is_multiple_of_identity_and_bounded():
    env = make_env("bandit-quadratic")
    fam = make_policy("gauss-meanstd")
    stats = rollout_paths(env, fam, [0.0, 1.0], 40, rng(2))
    g = fisher_analytic(fam, [0.0, 1.0])
    est = bpg_eval_from_paths(stats, g, "bq1")
    assert est.cov[0, 0] == pytest.approx(est.cov[1, 1])
    assert est.cov[0, 1] == 0.0
    assert np.trace(est.cov) <= 3.0 * 2  # b0 = 1 + n bounds each diagonal entry
    est_sparse = bpg_eval_sparse_from_paths(stats, g, "bq1", tau=1e-3)
    assert np.trace(est_sparse.cov) <= 3.0 * 2


def test_model2_cov_psd():
    env = make_env("lqr")
    fam = make_policy("lqr-gauss-raw")
    stats = rollout_paths(env, fam, [-0.2, 1.0], 30, rng(3))
    g = fisher_traj_mc(rollout_paths(env, fam, [-0.2, 1.0], 3000, rng(4)).scores)
    est = bpg_eval_from_paths(stats, g, "bq2")
    assert np.linalg.eigvalsh(est.cov).min() >= -1e-10


def test_sparse_dictionary_admission_rules():
    d = OnlineDictionary(tau=1e-2)
    assert d.offer(1.0) is True  # empty dictionary always admits
    assert d.offer(1.0, np.array([1.0])) is False  # exact duplicate: residual 0
    assert d.offer(1.0, np.array([0.2])) is True  # distinct enough
    a = d.projection_matrix()
    assert a.shape == (3, 2)
    assert np.allclose(a[0], [1, 0])
    assert np.allclose(a[1], [1, 0])  # projection of the duplicate
    assert np.allclose(a[2], [0, 1])


def test_all_distinct_paths_admitted_as_tau_vanishes():
    # the quadratic kernel on 2-d scores spans a 6-d feature space, so "all
    # distinct paths admitted" holds up to that rank; stay below it
    env = make_env("lqr")
    fam = make_policy("lqr-gauss-raw")
    stats = rollout_paths(env, fam, [-0.2, 1.0], 5, rng(5))
    g = fisher_traj_mc(rollout_paths(env, fam, [-0.2, 1.0], 500, rng(50)).scores)
    d = score_dictionary(stats.scores, g, "bq1", 1e-13)
    assert d.size == 5
    d2 = score_dictionary(stats.scores[:, :2], g, "bq2", 1e-13)
    assert d2.size == 2  # linear kernel rank is the parameter dimension


def test_sparse_equals_dense_models_1_and_2():
    env = make_env("lqr")
    fam = make_policy("lqr-gauss-raw")
    stats = rollout_paths(env, fam, [-0.2, 1.0], 25, rng(6))
    g = fisher_traj_mc(rollout_paths(env, fam, [-0.2, 1.0], 2000, rng(7)).scores)
    for model in ("bq1", "bq2"):
        for sigma_r in (0.0, 1.0):
            dense = bpg_eval_from_paths(stats, g, model, sigma_r, T=20)
            sparse = bpg_eval_sparse_from_paths(stats, g, model, sigma_r, T=20, tau=1e-12)
            assert np.max(np.abs(dense.mean - sparse.mean)) < 1e-6, (model, sigma_r)
            assert np.max(np.abs(dense.cov - sparse.cov)) < 1e-6, (model, sigma_r)


def test_all_duplicate_paths_degenerate_dictionary():
    st = stats_of(np.tile([[1.0], [0.5]], (1, 8)), np.full(8, 2.0))
    g = identity_fisher()
    est = bpg_eval_sparse_from_paths(st, g, "bq1", tau=1e-10)
    assert np.all(np.isfinite(est.mean))
    assert np.all(np.isfinite(est.cov))


def test_optimizer_zero_gradient_keeps_theta():
    env = make_env("bandit-linear", reward_noise_std=0.0)
    fam = make_policy("gauss-meanstd")

    class ZeroEnv:
        pass

    # all-zero returns give a zero posterior mean, so theta never moves
    stats_env = make_env("bandit-linear")
    theta0 = np.array([0.0, 1.0])
    res = bpg_optimize(stats_env, fam, theta0, 5, 10, Schedule(0.0), rng(8), fisher="analytic")
    assert np.allclose(res.theta, theta0)  # beta = 0 freezes the parameters
    assert len(res.curve) == 0  # no eval_fn attached


def test_natural_variant_with_identity_fisher_matches_plain():
    env = make_env("bandit-linear")
    fam = make_policy("gauss-meanstd")
    theta0 = np.array([0.2, 1.1])
    gi = identity_fisher()
    a = bpg_optimize(env, fam, theta0, 4, 12, Schedule(0.05), rng(9), variant="plain", fisher=gi)
    b = bpg_optimize(env, fam, theta0, 4, 12, Schedule(0.05), rng(9), variant="natural", fisher=gi)
    assert np.allclose(a.theta, b.theta, atol=1e-9)


def test_var_variant_scales_by_posterior_certainty():
    env = make_env("bandit-linear")
    fam = make_policy("gauss-meanstd")
    theta0 = np.array([0.0, 1.0])
    res = bpg_optimize(env, fam, theta0, 3, 20, Schedule(0.05), rng(10), variant="var",
                       fisher="analytic")
    assert np.all(np.isfinite(res.theta))


def test_unknown_model_rejected():
    with pytest.raises(ContractViolation):
        traj_kernel_gram(np.zeros((2, 1)), identity_fisher(), "bq3")
