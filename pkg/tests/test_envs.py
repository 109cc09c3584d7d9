"""Environment dynamics, bounds, terminal contracts, and determinism."""

import numpy as np
import pytest

from bpglab.envs import Bandit, Lqr, MountainCar, RandomWalk, ShipSteering, make_env, env_names
from bpglab.errors import ContractViolation
from bpglab.policies import make_policy
from bpglab.rollout import rollout_paths, rollout_trajectory


def rng(seed=0):
    return np.random.default_rng(seed)


def test_registry_names():
    assert env_names() == sorted(
        ["bandit-linear", "bandit-quadratic", "lqr", "randomwalk", "mountaincar", "ship"]
    )
    with pytest.raises(ContractViolation):
        make_env("pendulum")


def test_walk_reset_always_state_one():
    env = make_env("randomwalk")
    assert all(env.reset(rng(s)) == 1 for s in range(20))


def test_ship_reset_position_and_uniform_angles():
    env = make_env("ship")
    states = env.reset_batch(2000, rng(1))
    assert np.all(states[:, 0] == 40.0) and np.all(states[:, 1] == 40.0)
    assert states[:, 2].min() >= -180 and states[:, 2].max() <= 180
    assert abs(states[:, 2].mean()) < 10  # uniform over [-180, 180]
    assert abs(states[:, 3].mean()) < 1.0


def test_lqr_reset_zero_variance_gives_mean():
    env = Lqr(init_std=0.0)
    assert env.reset(rng(2)) == pytest.approx(0.3)


def test_mountain_car_goal_and_left_wall():
    env = make_env("mountaincar")
    # at the right edge with positive velocity the goal is reached
    tr = env.step(np.array([0.5, 0.04]), 2, rng(0))
    assert tr.terminal
    # forced below the left edge: clamp and zero the velocity
    tr = env.step(np.array([-1.19, -0.07]), 0, rng(0))
    assert tr.next_state[0] == pytest.approx(-1.2)
    assert tr.next_state[1] == 0.0
    assert not tr.terminal


def test_ship_straight_motion():
    env = make_env("ship")
    state = np.array([40.0, 40.0, 0.0, 0.0])
    tr = env.step(state, 0.0, rng(0))
    assert tr.next_state[1] == pytest.approx(40.6)  # dt * speed * cos(0)
    assert tr.next_state[0] == pytest.approx(40.0)


def test_ship_angle_wraps():
    env = make_env("ship")
    state = np.array([75.0, 75.0, 179.9, 15.0])
    tr = env.step(state, 15.0, rng(0))
    assert -180.0 <= tr.next_state[2] < 180.0


def test_bandit_episode_length_one_and_rewards():
    env = make_env("bandit-quadratic")
    fam = make_policy("gauss-meanstd")
    ps = rollout_paths(env, fam, [0.0, 1.0], 500, rng(3))
    assert np.all(ps.lengths == 1)
    env_lin = Bandit("linear")
    tr = env_lin.step(0.0, 1.7, rng(0))
    assert tr.reward == pytest.approx(1.7)
    assert Bandit("quadratic").step(0.0, -2.0, rng(0)).reward == pytest.approx(4.0)


def test_lqr_episodes_exactly_20_steps():
    env = make_env("lqr")
    fam = make_policy("lqr-gauss-raw")
    ps = rollout_paths(env, fam, [-0.5, 0.5], 200, rng(4))
    assert np.all(ps.lengths == 20)


def test_ship_episodes_bounded_500():
    env = make_env("ship")
    fam = make_policy("ship-cmac-gauss")
    ps = rollout_paths(env, fam, np.zeros(fam.dim), 50, rng(5))
    assert ps.lengths.max() <= 500


@pytest.mark.parametrize("name", ["randomwalk", "mountaincar", "ship"])
def test_bounds_hold_over_many_rollouts(name):
    # batched equivalent of 1e5 random rollouts: validate_states raises on violation
    env = make_env(name)
    if name == "randomwalk":
        fam = make_policy("walk-logistic")
        theta = np.zeros(10)
    elif name == "mountaincar":
        fam = make_policy("mc-softmax-rbf")
        theta = np.zeros(fam.dim)
    else:
        fam = make_policy("ship-cmac-gauss")
        theta = np.zeros(fam.dim)
    g = rng(6)
    states = env.reset_batch(2000, g)
    env.validate_states(states)
    for _ in range(60):
        obs = env.observe_batch(states, g)
        actions = fam.sample_batch(theta, obs, g)
        states, _, term, _ = env.step_batch(states, actions, g)
        env.validate_states(states)
        if np.any(term):  # replace finished episodes to keep the batch full
            fresh = env.reset_batch(int(term.sum()), g)
            states[np.flatnonzero(term)] = fresh


def test_walk_terminal_only_at_last_state():
    env = RandomWalk()
    tr = env.step(9, 1, rng(0))
    assert tr.terminal and tr.next_state == 10
    tr = env.step(9, 0, rng(0))
    assert not tr.terminal and tr.next_state == 8
    tr = env.step(1, 0, rng(0))  # retaining barrier
    assert tr.next_state == 1


def test_out_of_bounds_state_rejected():
    env = RandomWalk()
    with pytest.raises(ContractViolation):
        env.step(10, 1, rng(0))
    with pytest.raises(ContractViolation):
        MountainCar().step(np.array([0.7, 0.0]), 1, rng(0))


def test_same_seed_bit_identical_rollouts():
    env = RandomWalk(reward_noise_std=0.0)
    fam = make_policy("walk-logistic")
    theta = np.full(10, 0.4)
    a = rollout_paths(env, fam, theta, 64, rng(7))
    b = rollout_paths(env, fam, theta, 64, rng(7))
    assert np.array_equal(a.returns, b.returns)
    assert np.array_equal(a.scores, b.scores)
    assert np.array_equal(a.lengths, b.lengths)


def test_observation_channel_identity_and_aliasing():
    env = make_env("randomwalk")
    assert env.observe(4) == 4  # identity default

    def alias(states, rng_):
        return np.where(np.asarray(states) <= 2, 0, np.asarray(states))

    aliased = env.with_observation_channel(alias)
    assert aliased.observe(2) == 0
    assert aliased.observe(5) == 5
    assert aliased.observe(2) == aliased.observe(2)  # deterministic channel
    assert env.observe(2) == 2  # original untouched


def test_stochastic_observation_channel():
    env = make_env("randomwalk")

    def noisy(states, rng_):
        jitter = rng_.integers(0, 2, size=len(states))
        return np.minimum(np.asarray(states) + jitter, 10)

    chan = env.with_observation_channel(noisy)
    g = rng(9)
    obs = chan.observe_batch(np.full(2000, 4), g)
    assert set(np.unique(obs)) == {4, 5}
    assert 0.3 < (obs == 5).mean() < 0.7


def test_trajectory_invariants():
    env = make_env("randomwalk")
    fam = make_policy("walk-logistic")
    tr = rollout_trajectory(env, fam, np.full(10, 1.0), rng(8), gamma=0.99)
    assert len(tr) >= 1
    assert np.isfinite(tr.cumulative_return())
    for a, b in zip(tr.transitions[:-1], tr.transitions[1:]):
        assert a.next_state == b.state
    assert tr.transitions[-1].terminal
