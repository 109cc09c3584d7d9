"""Batched episode generation.

All heavy sampling goes through the functions here, which step a whole batch
of episodes in lockstep and either aggregate per-path statistics (trajectory
score and return, enough for the trajectory-level estimators) or record full
per-step data (needed by the temporal-difference critic).  Random draws are
made only for episodes that are still active, so results are reproducible
for a given (env, family, theta, M, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse as sp

from bpglab.envs import Env, Trajectory, Transition
from bpglab.policies import PolicyFamily


@dataclass
class PathStats:
    """Per-path trajectory scores and returns for a batch of episodes."""

    scores: np.ndarray  # (dim, M) trajectory score u(xi) per path
    returns: np.ndarray  # (M,) discounted return R(xi)
    lengths: np.ndarray  # (M,) episode lengths
    truncated: np.ndarray  # (M,) hit the step cap without a declared terminal
    success: np.ndarray  # (M,) env-specific success flag (ship)
    gamma: float


@dataclass
class Episode:
    """Per-step record of one episode, as consumed by the GPTD critic.

    For an episode truncated by a step cap, ``boundary_obs``/``boundary_action``
    hold the state-action pair at the cut (the action is drawn from the policy
    but never executed), so the critic can close its generative chain.
    """

    obs: np.ndarray  # (T, ...) observations at each acted step
    actions: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    truncated: bool = False
    success: bool = False
    boundary_obs: Optional[np.ndarray] = None
    boundary_action: Optional[object] = None

    def __len__(self) -> int:
        return len(self.actions)

    def discounted_return(self, gamma: float) -> float:
        return float(self.rewards @ np.power(gamma, np.arange(len(self.rewards))))


def _accumulate_scores(scores: np.ndarray, cols: np.ndarray, u) -> None:
    """scores[:, cols] += u, supporting sparse per-step score matrices."""
    if sp.issparse(u):
        u = u.tocsc()
        col_of_entry = cols[np.repeat(np.arange(u.shape[1]), np.diff(u.indptr))]
        np.add.at(scores, (u.indices, col_of_entry), u.data)
    else:
        scores[:, cols] += u


def rollout_paths(
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    n_paths: int,
    rng: np.random.Generator,
    gamma: Optional[float] = None,
    max_steps: Optional[int] = None,
) -> PathStats:
    """Sample ``n_paths`` episodes, aggregating scores and returns on the fly."""
    theta = family.validate_theta(theta)
    gamma = env.default_gamma if gamma is None else float(gamma)
    cap = _cap(env, max_steps)

    states = env.reset_batch(n_paths, rng)
    active = np.ones(n_paths, dtype=bool)
    scores = np.zeros((family.dim, n_paths))
    returns = np.zeros(n_paths)
    lengths = np.zeros(n_paths, dtype=np.int64)
    success = np.zeros(n_paths, dtype=bool)
    discount = np.ones(n_paths)

    t = 0
    while np.any(active):
        idx = np.flatnonzero(active)
        cur = states[idx]
        obs = env.observe_batch(cur, rng)
        actions = family.sample_batch(theta, obs, rng)
        _accumulate_scores(scores, idx, family.score_batch(theta, obs, actions))
        nxt, r, term, succ = env.step_batch(cur, actions, rng)
        returns[idx] += discount[idx] * r
        discount[idx] *= gamma
        lengths[idx] += 1
        states[idx] = nxt
        t += 1
        done = term.copy()
        if env.horizon is not None and t >= env.horizon:
            done[:] = True
        if succ is not None:
            success[idx] |= succ
        active[idx[done]] = False
        if cap is not None and t >= cap:
            break

    truncated = np.zeros(n_paths, dtype=bool) if env.cap_is_terminal else active.copy()
    return PathStats(scores, returns, lengths, truncated, success, gamma)


def rollout_episodes(
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    n_paths: int,
    rng: np.random.Generator,
    max_steps: Optional[int] = None,
) -> list[Episode]:
    """Sample full per-step episodes (observations, actions, rewards)."""
    theta = family.validate_theta(theta)
    cap = _cap(env, max_steps)

    states = env.reset_batch(n_paths, rng)
    active = np.ones(n_paths, dtype=bool)
    success = np.zeros(n_paths, dtype=bool)
    idx_chunks, obs_chunks, act_chunks, rew_chunks = [], [], [], []

    t = 0
    while np.any(active):
        idx = np.flatnonzero(active)
        cur = states[idx]
        obs = env.observe_batch(cur, rng)
        actions = family.sample_batch(theta, obs, rng)
        nxt, r, term, succ = env.step_batch(cur, actions, rng)
        idx_chunks.append(idx)
        obs_chunks.append(np.asarray(obs))
        act_chunks.append(np.asarray(actions))
        rew_chunks.append(np.asarray(r, dtype=float))
        states[idx] = nxt
        t += 1
        done = term.copy()
        if env.horizon is not None and t >= env.horizon:
            done[:] = True
        if succ is not None:
            success[idx] |= succ
        active[idx[done]] = False
        if cap is not None and t >= cap:
            break

    ep_of_step = np.concatenate(idx_chunks)
    all_obs = np.concatenate(obs_chunks, axis=0)
    all_act = np.concatenate(act_chunks)
    all_rew = np.concatenate(rew_chunks)
    order = np.argsort(ep_of_step, kind="stable")  # stable sort keeps time order per episode
    counts = np.bincount(ep_of_step, minlength=n_paths)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    episodes = []
    for ep in range(n_paths):
        sl = order[offsets[ep] : offsets[ep + 1]]
        truncated = bool(active[ep]) and not env.cap_is_terminal
        e = Episode(
            obs=all_obs[sl],
            actions=all_act[sl],
            rewards=all_rew[sl],
            truncated=truncated,
            success=bool(success[ep]),
        )
        if truncated:
            bobs = env.observe_batch(states[ep : ep + 1], rng)
            e.boundary_obs = np.asarray(bobs[0])
            e.boundary_action = family.sample_batch(theta, bobs, rng)[0]
        episodes.append(e)
    return episodes


def stats_from_episodes(
    episodes: list[Episode],
    family: PolicyFamily,
    theta: np.ndarray,
    gamma: float,
) -> PathStats:
    """Trajectory scores and returns recomputed from recorded episodes.

    Lets trajectory-level estimators and the critic consume the *same*
    sample.  Boundary pairs of truncated episodes are not part of the path
    and do not contribute to the score.
    """
    theta = family.validate_theta(theta)
    m = len(episodes)
    obs = np.concatenate([np.asarray(e.obs) for e in episodes], axis=0)
    acts = np.concatenate([np.asarray(e.actions) for e in episodes])
    u = family.score_batch(theta, obs, acts)
    scores = np.zeros((family.dim, m))
    returns = np.empty(m)
    lengths = np.empty(m, dtype=np.int64)
    start = 0
    for i, e in enumerate(episodes):
        t_e = len(e)
        cols = slice(start, start + t_e)
        block = u[:, cols]
        scores[:, i] = np.asarray(block.sum(axis=1)).ravel()
        returns[i] = e.discounted_return(gamma)
        lengths[i] = t_e
        start += t_e
    truncated = np.array([e.truncated for e in episodes])
    success = np.array([e.success for e in episodes])
    return PathStats(scores, returns, lengths, truncated, success, gamma)


def rollout_trajectory(
    env: Env,
    family: PolicyFamily,
    theta: np.ndarray,
    rng: np.random.Generator,
    gamma: Optional[float] = None,
    max_steps: Optional[int] = None,
    record_observations: bool = False,
) -> Trajectory:
    """Sample a single episode as a :class:`Trajectory` (test/diagnostic path)."""
    theta = family.validate_theta(theta)
    gamma = env.default_gamma if gamma is None else float(gamma)
    cap = _cap(env, max_steps)
    state = env.reset(rng)
    transitions = []
    observations = [] if record_observations else None
    success = False
    t = 0
    while True:
        obs = env.observe(state, rng)
        action = sample_action_scalar(family, theta, obs, rng)
        nxt, r, term, succ = env.step_batch(env._pack(state), np.asarray([action]), rng)
        t += 1
        terminal = bool(term[0]) or (env.horizon is not None and t >= env.horizon)
        tr = Transition(state, action, float(r[0]), env._unpack(nxt), terminal)
        transitions.append(tr)
        if record_observations:
            observations.append(obs)
        if succ is not None and bool(succ[0]):
            success = True
        state = tr.next_state
        if terminal:
            return Trajectory(transitions, gamma, observations, truncated=False, success=success)
        if cap is not None and t >= cap:
            return Trajectory(
                transitions, gamma, observations, truncated=not env.cap_is_terminal, success=success
            )


def sample_action_scalar(family, theta, obs, rng):
    a = family.sample_batch(theta, np.asarray(obs).reshape((1,) + np.asarray(obs).shape), rng)
    return a[0].item() if np.ndim(a[0]) == 0 else a[0]


def _cap(env: Env, max_steps: Optional[int]) -> Optional[int]:
    if max_steps is not None:
        return int(max_steps)
    if env.horizon is not None:
        return int(env.horizon)
    return env.step_cap
