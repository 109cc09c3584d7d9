"""Fisher information estimators against closed forms and each other."""

import numpy as np
import pytest

from bpglab.envs import make_env
from bpglab.errors import ContractViolation, ParameterDomainError
from bpglab.fisher import (
    FisherInfo,
    fisher_analytic,
    fisher_g_est,
    fisher_inv_recursive,
    fisher_ml_lqr,
    fisher_state_action_avg,
    fisher_traj_mc,
    fit_lqr_transition_model,
)
from bpglab.oracles import lqr_exact_fisher
from bpglab.policies import make_policy
from bpglab.rollout import rollout_paths


def rng(seed=0):
    return np.random.default_rng(seed)


def test_traj_mc_single_and_average():
    one = fisher_traj_mc(np.array([[1.0], [0.0]]))
    assert np.allclose(one.dense(), [[1, 0], [0, 0]])
    two = fisher_traj_mc(np.array([[1.0, -1.0], [0.0, 0.0]]))
    assert np.allclose(two.dense(), [[1, 0], [0, 0]])
    with pytest.raises(ContractViolation):
        fisher_traj_mc(np.zeros((2, 0)))


def test_bandit_fisher_matches_diag12():
    env = make_env("bandit-linear")
    fam = make_policy("gauss-meanstd")
    stats = rollout_paths(env, fam, [0.0, 1.0], 10**5, rng(1))
    g = fisher_traj_mc(stats.scores).dense()
    assert abs(g[0, 0] - 1.0) < 0.05
    assert abs(g[1, 1] - 2.0) < 0.10  # 5% of the entry value
    assert fisher_analytic(fam, [0.0, 1.0]).dense() == pytest.approx(np.diag([1.0, 2.0]))


def test_traj_mc_unbiased_on_bandit():
    env = make_env("bandit-linear")
    fam = make_policy("gauss-meanstd")
    g = rng(2)
    entries = np.array([
        fisher_traj_mc(rollout_paths(env, fam, [0.0, 1.0], 20, g).scores).dense().ravel()
        for _ in range(1000)
    ])
    mean = entries.mean(axis=0)
    stderr = entries.std(axis=0, ddof=1) / np.sqrt(len(entries))
    target = np.diag([1.0, 2.0]).ravel()
    assert np.all(np.abs(mean - target) < 3 * stderr + 1e-12)


def test_recursive_inverse_examples():
    p = np.eye(2)
    upd = fisher_inv_recursive(p, np.array([1.0, 0.0]), 0.5)
    assert np.allclose(upd, np.diag([1.0, 2.0]))
    # zeta -> 0 leaves the inverse untouched
    near = fisher_inv_recursive(p, np.array([1.0, 0.0]), 1e-12)
    assert np.allclose(near, p, atol=1e-9)
    # rank-0 update scales by 1/(1 - zeta)
    assert np.allclose(fisher_inv_recursive(p, np.zeros(2), 0.3), p / 0.7)
    with pytest.raises(ParameterDomainError):
        fisher_inv_recursive(p, np.zeros(2), 1.0)


def test_recursive_inverse_tracks_direct_inverse_100_steps():
    g = rng(3)
    n = 4
    mat = np.eye(n)
    inv = np.eye(n)
    for i in range(100):
        u = g.standard_normal(n)
        zeta = 1.0 / (i + 2)
        mat = (1 - zeta) * mat + zeta * np.outer(u, u)
        inv = fisher_inv_recursive(inv, u, zeta)
        assert np.max(np.abs(inv - np.linalg.inv(mat))) < 1e-6


def test_state_action_avg_examples():
    one = fisher_state_action_avg(np.array([[1.0], [0.0]]))
    assert np.allclose(one.dense(), [[1, 0], [0, 0]])
    two = fisher_state_action_avg(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert np.allclose(two.dense(), 0.5 * np.eye(2))


def test_g_est_gamma_zero_single_step():
    env = make_env("randomwalk", reward_noise_std=0.0)
    fam = make_policy("walk-logistic")
    theta = np.zeros(10)
    g = fisher_g_est(env, fam, theta, 1, 0.0, rng(4)).dense()
    # exactly one outer product u(z0) u(z0)^T; at p = 1/2 its trace is 1/4
    assert np.count_nonzero(g) == 1
    assert np.trace(g) == pytest.approx(0.25)


def test_g_est_terminal_branch_weight():
    # bandit episodes end immediately, so every episode takes the final
    # 1/(1-gamma) branch: G = E[u u^T] / (1 - gamma)
    env = make_env("bandit-linear")
    fam = make_policy("gauss-meanstd")
    gamma = 0.5
    g = fisher_g_est(env, fam, [0.0, 1.0], 4000, gamma, rng(5)).dense()
    assert np.allclose(np.diag(g), np.array([1.0, 2.0]) / (1 - gamma), rtol=0.15)


def test_g_est_psd_and_finite_condition():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, np.log(41 / 9))
    info = fisher_g_est(env, fam, theta, 2000, 0.99, rng(6))
    w = np.linalg.eigvalsh(info.dense())
    assert w.min() > -1e-8
    solved = info.solve(np.eye(10))
    assert np.all(np.isfinite(solved))
    assert info.jitter >= 1e-6  # preemptive Fisher jitter was applied


def test_g_est_rejects_gamma_one():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    with pytest.raises(ParameterDomainError):
        fisher_g_est(env, fam, np.zeros(10), 10, 1.0, rng(7))


def test_g_est_vs_state_action_avg_scale():
    """The restart estimator carries 1/(1-gamma) of the stationary mass.

    On a long-episode policy (drift left) the restart occupancy approaches the
    visit distribution, so (1-gamma) * g-est tracks the state-action average.
    """
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    theta = np.full(10, -2.0)
    gamma = 0.99
    g_est = fisher_g_est(env, fam, theta, 150, gamma, rng(8)).dense()
    g = rng(9)
    stats_scores = []
    states = env.reset_batch(1, g)
    # one long trajectory of 1e4 steps for the stationary average
    obs_list, act_list = [], []
    s = states
    for _ in range(10**4):
        obs = env.observe_batch(s, g)
        a = fam.sample_batch(theta, obs, g)
        obs_list.append(obs[0])
        act_list.append(a[0])
        s, _, term, _ = env.step_batch(s, a, g)
        if term[0]:
            s = env.reset_batch(1, g)
    u = fam.score_batch(theta, np.asarray(obs_list), np.asarray(act_list))
    savg = fisher_state_action_avg(u).dense()
    scaled = (1 - gamma) * g_est
    denom = np.linalg.norm(savg)
    assert np.linalg.norm(scaled - savg) / denom < 0.10


def test_lqr_model_fit_and_ml_fisher():
    env = make_env("lqr")
    fam = make_policy("lqr-gauss-raw")
    theta = np.array([-0.2, 1.0])
    g = rng(10)
    # transitions harvested from full rollouts (states spread over the horizon)
    xs, acts, nxts = [], [], []
    x = env.reset_batch(50, g)
    for _ in range(20):
        a = fam.sample_batch(theta, x, g)
        nxt, _, _, _ = env.step_batch(x, a, g)
        xs.append(x.copy())
        acts.append(a)
        nxts.append(nxt)
        x = nxt
    transitions = np.stack([np.concatenate(xs), np.concatenate(acts), np.concatenate(nxts)], axis=1)
    c = fit_lqr_transition_model(transitions)
    assert np.allclose(c, [1.0, 1.0, 0.0, 0.1], atol=[0.05, 0.05, 0.05, 0.005])

    info = fisher_ml_lqr(fam, theta, transitions, rng(11), n_model_paths=20000)
    exact = lqr_exact_fisher(-0.2, 1.0)
    assert info.method == "ml-model"
    assert np.allclose(np.diag(info.dense()), np.diag(exact), rtol=0.1)
    w = np.linalg.eigvalsh(info.dense())
    assert w.min() > -1e-8


def test_lqr_model_fit_exact_recovery_noise_free():
    g = rng(12)
    x = g.uniform(-1, 1, 200)
    a = g.uniform(-1, 1, 200)
    nxt = 2.0 * x + 0.5 * a + 1.0
    c = fit_lqr_transition_model(np.stack([x, a, nxt], axis=1))
    assert np.allclose(c, [2.0, 0.5, 1.0, 0.0], atol=1e-8)


def test_lqr_model_fit_rejects_degenerate_design():
    x = np.zeros(50)
    a = np.zeros(50)
    with pytest.raises(ContractViolation):
        fit_lqr_transition_model(np.stack([x, a, x], axis=1))
    with pytest.raises(ContractViolation):
        fit_lqr_transition_model(np.zeros((5, 3)))  # fewer than 10 transitions


def test_all_estimators_produce_symmetric_psd():
    env = make_env("lqr")
    fam = make_policy("lqr-gauss-raw")
    stats = rollout_paths(env, fam, [-0.2, 1.0], 500, rng(13))
    for info in (fisher_traj_mc(stats.scores), fisher_state_action_avg(stats.scores)):
        g = info.dense()
        assert np.max(np.abs(g - g.T)) < 1e-10
        assert np.linalg.eigvalsh(g).min() > -1e-8
