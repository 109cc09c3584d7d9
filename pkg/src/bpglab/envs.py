"""Episodic benchmark environments behind one batch-first interface.

Environments are immutable descriptions; stepping is a pure function of
``(states, actions, rng draw)`` operating on a whole batch of episodes at
once.  The scalar ``reset``/``step`` API wraps the batch one so there is a
single source of truth for the dynamics.

Provided environments (selected by name):

``bandit-linear`` / ``bandit-quadratic``
    Single continuous action, one step per episode, reward ``a`` or ``a**2``.
``lqr``
    Scalar linear system ``x' = x + a + noise`` with cost ``x^2 + 0.1 a^2``
    over a fixed 20-step horizon (a minimization problem).
``randomwalk``
    Linear chain of 10 states, retaining barrier on the left, zero-reward
    absorbing state on the right, unit cost per step with Gaussian noise.
``mountaincar``
    Classic underpowered-car hill climb, reward -1 per step, three actions.
``ship``
    Continuous-action navigation on a 150 x 150 m surface with turn-rate lag;
    the per-episode success flag is the optimization metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from bpglab.errors import ContractViolation

ObservationChannel = Callable[[np.ndarray, Optional[np.random.Generator]], np.ndarray]


@dataclass(frozen=True)
class Transition:
    state: object
    action: object
    reward: float
    next_state: object
    terminal: bool


@dataclass
class Trajectory:
    """One episode: aligned transitions, optional observations, and a discount."""

    transitions: list[Transition]
    gamma: float = 1.0
    observations: Optional[list] = None
    truncated: bool = False
    success: bool = False

    def __post_init__(self):
        if not self.transitions:
            raise ContractViolation("trajectory must contain at least one transition")
        for a, b in zip(self.transitions[:-1], self.transitions[1:]):
            if not np.array_equal(np.asarray(a.next_state), np.asarray(b.state)):
                raise ContractViolation("transitions do not chain: next_state mismatch")
        if not math.isfinite(self.cumulative_return()):
            raise ContractViolation("non-finite cumulative return")

    def __len__(self) -> int:
        return len(self.transitions)

    def cumulative_return(self) -> float:
        g = 1.0
        total = 0.0
        for tr in self.transitions:
            total += g * tr.reward
            g *= self.gamma
        return total


class Env:
    """Base environment.  Subclasses implement the batch dynamics."""

    name: str = "?"
    state_shape: tuple[int, ...] = ()
    default_gamma: float = 1.0
    horizon: Optional[int] = None  # fixed episode length, reached state counts as terminal
    step_cap: Optional[int] = None  # safety/training cap
    cap_is_terminal: bool = False  # whether hitting step_cap is a declared terminal
    discrete_actions: Optional[int] = None

    def __init__(self):
        self._obs_channel: Optional[ObservationChannel] = None

    # -- batch API -----------------------------------------------------
    def reset_batch(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, states, actions, rng):
        """Return ``(next_states, rewards, terminal, success)`` for a batch."""
        raise NotImplementedError

    def observe_batch(self, states: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if self._obs_channel is None:
            return states
        return self._obs_channel(states, rng)

    # -- scalar wrappers -----------------------------------------------
    def reset(self, rng: np.random.Generator):
        return self._unpack(self.reset_batch(1, rng))

    def step(self, state, action, rng: np.random.Generator) -> Transition:
        states = self._pack(state)
        self.validate_states(states)
        self.validate_acting(states)
        nxt, r, term, _ = self.step_batch(states, self._pack_action(action), rng)
        return Transition(state, action, float(r[0]), self._unpack(nxt), bool(term[0]))

    def observe(self, state, rng: Optional[np.random.Generator] = None):
        out = self.observe_batch(self._pack(state), rng)
        return out[0] if isinstance(out, np.ndarray) and out.ndim >= 1 and out.shape[0] == 1 else out

    # -- helpers ---------------------------------------------------------
    def _pack(self, state) -> np.ndarray:
        arr = np.asarray(state)
        return arr.reshape((1,) + self.state_shape)

    @staticmethod
    def _pack_action(action) -> np.ndarray:
        return np.asarray([action])

    def _unpack(self, states: np.ndarray):
        s = states[0]
        return s if self.state_shape else s.item()

    def validate_states(self, states: np.ndarray) -> None:
        """Raise ContractViolation if any state is outside declared bounds."""

    def validate_acting(self, states: np.ndarray) -> None:
        """Raise ContractViolation if any state cannot be acted from (absorbing)."""

    def with_observation_channel(self, channel: ObservationChannel) -> "Env":
        import copy

        clone = copy.copy(self)
        clone._obs_channel = channel
        return clone


class Bandit(Env):
    """One state, one continuous action, episode length exactly 1."""

    state_shape = ()
    default_gamma = 1.0
    horizon = 1

    def __init__(self, kind: str = "linear", reward_noise_std: float = 0.0):
        super().__init__()
        if kind not in ("linear", "quadratic"):
            raise ContractViolation(f"unknown bandit kind {kind!r}")
        self.kind = kind
        self.reward_noise_std = float(reward_noise_std)
        self.name = f"bandit-{kind}"

    def reset_batch(self, size, rng):
        return np.zeros(size)

    def step_batch(self, states, actions, rng):
        a = np.asarray(actions, dtype=float)
        r = a if self.kind == "linear" else a * a
        if self.reward_noise_std > 0:
            r = r + self.reward_noise_std * rng.standard_normal(a.shape)
        term = np.ones(a.shape, dtype=bool)
        return np.zeros_like(a), r, term, None


class Lqr(Env):
    """Scalar linear-quadratic regulator, 20-step horizon, cost semantics."""

    state_shape = ()
    default_gamma = 1.0
    horizon = 20

    INIT_MEAN = 0.3
    INIT_STD = math.sqrt(0.001)
    NOISE_STD = math.sqrt(0.01)

    def __init__(self, reward_noise_std: float = 0.0, init_std: Optional[float] = None):
        super().__init__()
        self.reward_noise_std = float(reward_noise_std)
        self.init_std = self.INIT_STD if init_std is None else float(init_std)
        self.name = "lqr"

    def reset_batch(self, size, rng):
        return self.INIT_MEAN + self.init_std * rng.standard_normal(size)

    def step_batch(self, states, actions, rng):
        x = np.asarray(states, dtype=float)
        a = np.asarray(actions, dtype=float)
        r = x * x + 0.1 * a * a
        if self.reward_noise_std > 0:
            r = r + self.reward_noise_std * rng.standard_normal(x.shape)
        nxt = x + a + self.NOISE_STD * rng.standard_normal(x.shape)
        term = np.zeros(x.shape, dtype=bool)  # horizon handled by the rollout loop
        return nxt, r, term, None


class RandomWalk(Env):
    """Linear chain 1..n; left wall retains, state n absorbs with zero reward."""

    state_shape = ()
    default_gamma = 0.99
    step_cap = 10**6  # episodes that run this long count as failures
    cap_is_terminal = False
    discrete_actions = 2  # 0 = left, 1 = right

    def __init__(self, n_states: int = 10, reward_noise_std: float = 0.1):
        super().__init__()
        self.n_states = int(n_states)
        self.reward_noise_std = float(reward_noise_std)
        self.name = "randomwalk"

    def reset_batch(self, size, rng):
        return np.ones(size, dtype=np.int64)

    def validate_states(self, states):
        s = np.asarray(states)
        if s.size and (s.min() < 1 or s.max() > self.n_states):
            raise ContractViolation("random-walk state outside 1..n")

    def validate_acting(self, states):
        s = np.asarray(states)
        if s.size and s.max() >= self.n_states:
            raise ContractViolation("cannot act from the absorbing state")

    def step_batch(self, states, actions, rng):
        x = np.asarray(states, dtype=np.int64)
        a = np.asarray(actions, dtype=np.int64)
        nxt = np.where(a == 1, x + 1, np.maximum(x - 1, 1))
        r = np.ones(x.shape)
        if self.reward_noise_std > 0:
            r = r + self.reward_noise_std * rng.standard_normal(x.shape)
        term = nxt == self.n_states
        return nxt, r, term, None


class MountainCar(Env):
    """Underpowered car on a hill; three thrusts; -1 reward per step."""

    state_shape = (2,)
    default_gamma = 0.99
    step_cap = 1000  # training-phase cap; evaluation episodes are capped separately
    cap_is_terminal = False
    discrete_actions = 3  # 0 = reverse, 1 = zero, 2 = forward

    X_MIN, X_MAX = -1.2, 0.5
    V_MIN, V_MAX = -0.07, 0.07
    THRUST = np.array([-1.0, 0.0, 1.0])

    def __init__(self):
        super().__init__()
        self.name = "mountaincar"

    def reset_batch(self, size, rng):
        x = rng.uniform(self.X_MIN, self.X_MAX, size)
        v = rng.uniform(self.V_MIN, self.V_MAX, size)
        return np.stack([x, v], axis=1)

    def validate_states(self, states):
        s = np.asarray(states, dtype=float)
        eps = 1e-12
        if s.size and (
            s[:, 0].min() < self.X_MIN - eps
            or s[:, 0].max() > self.X_MAX + eps
            or np.abs(s[:, 1]).max() > self.V_MAX + eps
        ):
            raise ContractViolation("mountain-car state outside declared bounds")

    def step_batch(self, states, actions, rng):
        s = np.asarray(states, dtype=float)
        thrust = self.THRUST[np.asarray(actions, dtype=np.int64)]
        v = s[:, 1] + 0.001 * thrust - 0.0025 * np.cos(3.0 * s[:, 0])
        v = np.clip(v, self.V_MIN, self.V_MAX)
        x = s[:, 0] + v
        term = x >= self.X_MAX
        hit_left = x <= self.X_MIN
        x = np.clip(x, self.X_MIN, self.X_MAX)
        v = np.where(hit_left, 0.0, v)
        r = -np.ones(x.shape)
        return np.stack([x, v], axis=1), r, term, None

    @staticmethod
    def to_unit_square(states: np.ndarray) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        out = np.empty_like(s)
        out[..., 0] = (s[..., 0] - MountainCar.X_MIN) / (MountainCar.X_MAX - MountainCar.X_MIN)
        out[..., 1] = (s[..., 1] - MountainCar.V_MIN) / (MountainCar.V_MAX - MountainCar.V_MIN)
        return out


class ShipSteering(Env):
    """Navigate to (100, 100) on a 150 x 150 m surface within 500 steps.

    State is ``(x, y, heading deg, turn rate deg/s)``.  The commanded turn
    rate reaches the actual one through a first-order lag.  Leaving the
    surface or running out of steps terminates the episode as a failure.
    """

    state_shape = (4,)
    default_gamma = 1.0
    step_cap = 500
    cap_is_terminal = True  # declared terminal condition, not a truncation

    DT = 0.2
    SPEED = 3.0
    LAG = 5.0
    GOAL = np.array([100.0, 100.0])
    ACTION_LIMIT = 15.0

    def __init__(self, goal_radius: float = 5.0):
        super().__init__()
        self.goal_radius = float(goal_radius)
        self.name = "ship"

    def reset_batch(self, size, rng):
        out = np.empty((size, 4))
        out[:, 0] = 40.0
        out[:, 1] = 40.0
        out[:, 2] = rng.uniform(-180.0, 180.0, size)
        out[:, 3] = rng.uniform(-15.0, 15.0, size)
        return out

    def validate_states(self, states):
        s = np.asarray(states, dtype=float)
        if not s.size:
            return
        eps = 1e-9
        ok = (
            (s[:, 0] >= -eps).all()
            and (s[:, 0] <= 150 + eps).all()
            and (s[:, 1] >= -eps).all()
            and (s[:, 1] <= 150 + eps).all()
            and (np.abs(s[:, 2]) <= 180 + eps).all()
            and (np.abs(s[:, 3]) <= 15 + eps).all()
        )
        if not ok:
            raise ContractViolation("ship state outside declared bounds")

    def step_batch(self, states, actions, rng):
        s = np.asarray(states, dtype=float)
        a = np.clip(np.asarray(actions, dtype=float), -self.ACTION_LIMIT, self.ACTION_LIMIT)
        heading_rad = np.deg2rad(s[:, 2])
        x = s[:, 0] + self.DT * self.SPEED * np.sin(heading_rad)
        y = s[:, 1] + self.DT * self.SPEED * np.cos(heading_rad)
        heading = s[:, 2] + self.DT * s[:, 3]
        heading = (heading + 180.0) % 360.0 - 180.0  # wrap to [-180, 180)
        rate = s[:, 3] + (self.DT / self.LAG) * (a - s[:, 3])
        reached = np.hypot(x - self.GOAL[0], y - self.GOAL[1]) <= self.goal_radius
        out_of_bounds = (x < 0) | (x > 150) | (y < 0) | (y > 150)
        term = reached | out_of_bounds
        nxt = np.stack([np.clip(x, 0.0, 150.0), np.clip(y, 0.0, 150.0), heading, rate], axis=1)
        # the unit success reward is the episode's whole return (gamma = 1),
        # so the expected return is exactly the success probability
        r = reached.astype(float)
        return nxt, r, term, reached


_REGISTRY = {
    "bandit-linear": lambda **kw: Bandit("linear", **kw),
    "bandit-quadratic": lambda **kw: Bandit("quadratic", **kw),
    "lqr": Lqr,
    "randomwalk": RandomWalk,
    "mountaincar": MountainCar,
    "ship": ShipSteering,
}


def env_names() -> list[str]:
    return sorted(_REGISTRY)


def make_env(name: str, **kwargs) -> Env:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ContractViolation(f"unknown environment {name!r}; known: {env_names()}") from None
    return factory(**kwargs)
