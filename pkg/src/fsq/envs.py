"""Small native episodic environments.

Every environment exposes ``reset() -> state`` and
``step(action) -> (next_state, reward, terminal)``. Episode length limits are
enforced by the training loop via ``max_steps``; ``terminal`` is reported only
for genuine termination. Actions outside the box are clipped and counted in
``clipped_actions``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from fsq.core import ActionSpaceSpec, ConfigError, ShapeError


class ProtocolError(RuntimeError):
    """Stepping an environment that has not been reset or has terminated."""


@dataclass(frozen=True)
class EnvDescriptor:
    name: str
    state_dim: int
    action_spec: ActionSpaceSpec
    max_steps: int
    state_low: tuple
    state_high: tuple
    success_threshold: float | None
    reward_range: tuple

    def describe(self) -> str:
        return (
            f"{self.name}: state_dim={self.state_dim} state in {list(self.state_low)}..{list(self.state_high)}, "
            f"action_dim={self.action_spec.dims} box [{self.action_spec.low.tolist()}, "
            f"{self.action_spec.high.tolist()}], T={self.max_steps}, "
            f"reward in {list(self.reward_range)}, success_threshold={self.success_threshold}"
        )


class Env:
    name = "env"

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.clipped_actions = 0
        self._state = None
        self._done = True

    def seed(self, rng: np.random.Generator):
        self.rng = rng

    @property
    def descriptor(self) -> EnvDescriptor:
        raise NotImplementedError

    @property
    def action_spec(self) -> ActionSpaceSpec:
        return self.descriptor.action_spec

    @property
    def max_steps(self) -> int:
        return self.descriptor.max_steps

    @property
    def state(self):
        return None if self._state is None else self._state.copy()

    def reset(self) -> np.ndarray:
        self._state = self._reset()
        self._done = False
        return self._state.copy()

    def reset_to(self, state) -> np.ndarray:
        self._state = np.array(state, dtype=np.float64)
        self._done = False
        return self._state.copy()

    def _clip_action(self, action) -> np.ndarray:
        spec = self.action_spec
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (spec.dims,):
            raise ShapeError(f"{self.name}: action has shape {a.shape}, expected ({spec.dims},)")
        clipped = spec.clip(a)
        if not np.array_equal(clipped, a):
            self.clipped_actions += 1
        return clipped

    def step(self, action):
        if self._state is None or self._done:
            raise ProtocolError(f"{self.name}: step() called without reset() or after a terminal step")
        a = self._clip_action(action)
        state, reward, terminal = self._step(self._state, a)
        self._state = state
        self._done = terminal
        return state.copy(), float(reward), bool(terminal)


class PointReacher(Env):
    """Drive a point in [-2, 2]^2 to the origin with velocity commands.

    ``p' = clip(p + h*a)``; reward ``-|p'|`` each step, plus 10 and
    termination once ``|p'| < 0.05``.
    """

    name = "point_reacher"
    goal_radius = 0.05
    goal_bonus = 10.0
    bound = 2.0

    def __init__(self, h: float = 0.05, T: int = 100, rng=None):
        super().__init__(rng)
        if not h > 0:
            raise ConfigError("point_reacher: h must be positive")
        self.h = float(h)
        self.T = int(T)

    @functools.cached_property
    def descriptor(self):
        return EnvDescriptor(
            self.name, 2, ActionSpaceSpec.box(2), self.T, (-2.0, -2.0), (2.0, 2.0),
            success_threshold(optimal_mean_return(self.h)),
            (-self.bound * math.sqrt(2), self.goal_bonus),
        )

    def _reset(self):
        return self.rng.uniform(-self.bound, self.bound, size=2)

    def _step(self, p, a):
        p = np.clip(p + self.h * a, -self.bound, self.bound)
        dist = math.hypot(p[0], p[1])
        if dist < self.goal_radius:
            return p, self.goal_bonus - dist, True
        return p, -dist, False


def optimal_return(p0, h: float = 0.05) -> float:
    """Return of the straight-line, full-speed path from ``p0`` to the goal.

    The point moves along the ray to the origin at the largest speed the box
    allows in that direction, ``h / max(|cos|, |sin|)``; its final step stops
    on the origin when it can reach it. This is a reference path, not an upper
    bound: steering toward the box corner shrinks the distance faster off the
    axes, so good policies can beat it.
    """
    r = math.hypot(p0[0], p0[1])
    radius, bonus = PointReacher.goal_radius, PointReacher.goal_bonus
    if r < radius or r == 0.0:
        return bonus
    speed = h * r / max(abs(p0[0]), abs(p0[1]))
    # first step that ends strictly inside the goal; nudge off float rounding at the boundary
    k = math.floor((r - radius) / speed) + 1
    while k > 1 and r - speed * (k - 1) < radius:
        k -= 1
    while r - speed * k >= radius:
        k += 1
    n = k - 1  # non-terminal steps before it
    final_dist = max(0.0, r - speed * k)  # the last step stops at the origin if it can reach it
    return -(n * r - speed * n * (n + 1) / 2) + bonus - final_dist


@functools.lru_cache(maxsize=None)
def optimal_mean_return(h: float = 0.05, grid: int = 200) -> float:
    """Mean of :func:`optimal_return` over uniform starts (midpoint rule)."""
    xs = (np.arange(grid) + 0.5) / grid * 4.0 - 2.0
    return float(np.mean([optimal_return((x, y), h) for x in xs for y in xs]))


def success_threshold(optimal_mean: float, fraction: float = 0.9) -> float:
    """Within ``1 - fraction`` of |optimal| of the optimum, for either sign."""
    return optimal_mean - (1.0 - fraction) * abs(optimal_mean)


class ContinuousMountainCar(Env):
    name = "mountain_car"
    min_position, max_position = -1.2, 0.6
    max_speed = 0.07
    goal_position = 0.45
    power = 0.0015

    def __init__(self, T: int = 999, rng=None):
        super().__init__(rng)
        self.T = int(T)

    @functools.cached_property
    def descriptor(self):
        return EnvDescriptor(
            self.name, 2, ActionSpaceSpec.box(1), self.T,
            (self.min_position, -self.max_speed), (self.max_position, self.max_speed),
            90.0, (-0.1, 100.0),
        )

    def _reset(self):
        return np.array([self.rng.uniform(-0.6, -0.4), 0.0])

    def _step(self, state, a):
        position, velocity = state
        force = float(a[0])
        velocity += force * self.power - 0.0025 * math.cos(3 * position)
        velocity = min(max(velocity, -self.max_speed), self.max_speed)
        position += velocity
        position = min(max(position, self.min_position), self.max_position)
        if position == self.min_position and velocity < 0:
            velocity = 0.0
        terminal = position >= self.goal_position
        reward = -0.1 * force**2 + (100.0 if terminal else 0.0)
        return np.array([position, velocity]), reward, terminal


class LatticeMdp(Env):
    """Integer chain with a scalar action whose sign moves the state.

    ``s' = clamp(s + sign(a))``; reward +1 on landing at the right edge, -1 at
    the left edge, 0 otherwise. Never terminates. Starting from action 0 with
    increments ``delta_a``, every reachable action lies on the lattice
    ``{-1, -1 + delta_a, ..., 1}``.
    """

    name = "lattice_mdp"

    def __init__(self, n_states: int = 3, delta_a: float = 1.0, T: int = 10, rng=None):
        super().__init__(rng)
        if not 2 <= n_states <= 20:
            raise ConfigError(f"lattice_mdp: n_states must lie in [2, 20], got {n_states}")
        steps = 1.0 / delta_a if delta_a > 0 else float("nan")
        if not (delta_a > 0 and abs(steps - round(steps)) < 1e-9):
            raise ConfigError(f"lattice_mdp: 1/delta_a must be an integer, got delta_a={delta_a}")
        self.n_states = int(n_states)
        self.delta_a = float(delta_a)
        self.T = int(T)
        self.lattice = np.linspace(-1.0, 1.0, 2 * round(steps) + 1)

    @functools.cached_property
    def descriptor(self):
        return EnvDescriptor(
            self.name, 1, ActionSpaceSpec.box(1, delta=self.delta_a), self.T,
            (0.0,), (float(self.n_states - 1),), self.optimal_mean_return() * 0.9, (-1.0, 1.0),
        )

    @property
    def n_lattice(self) -> int:
        return len(self.lattice)

    def reward_span(self) -> float:
        return 2.0

    def _reset(self):
        return np.array([float(self.rng.integers(self.n_states))])

    @staticmethod
    def sign_bucket(a: float) -> int:
        return 0 if abs(a) < 1e-9 else (1 if a > 0 else -1)

    def transition(self, s: int, a: float) -> tuple[int, float]:
        s_next = min(max(s + self.sign_bucket(a), 0), self.n_states - 1)
        reward = 1.0 if s_next == self.n_states - 1 else (-1.0 if s_next == 0 else 0.0)
        return s_next, reward

    def _step(self, state, a):
        s_next, reward = self.transition(int(state[0]), float(a[0]))
        return np.array([float(s_next)]), reward, False

    def lattice_index(self, a: float) -> int:
        i = int(round((float(np.ravel(a)[0]) + 1.0) / self.delta_a))
        if not (0 <= i < self.n_lattice and abs(self.lattice[i] - float(np.ravel(a)[0])) < 1e-9):
            raise ValueError(f"action {a} is not on the lattice")
        return i

    def one_hot_aux(self, state, action) -> np.ndarray:
        """One-hot code of the (state, lattice action) pair."""
        v = np.zeros(self.n_states * self.n_lattice)
        v[int(np.ravel(state)[0]) * self.n_lattice + self.lattice_index(action)] = 1.0
        return v

    def one_hot_state(self, state) -> np.ndarray:
        v = np.zeros(self.n_states)
        v[int(np.ravel(state)[0])] = 1.0
        return v

    def optimal_mean_return(self) -> float:
        """Best undiscounted T-step return averaged over uniform starts.

        Moving right every step is optimal: it reaches the +1 edge soonest and
        then stays there.
        """
        total = 0.0
        for s0 in range(self.n_states):
            s, ret = s0, 0.0
            for _ in range(self.T):
                s, r = self.transition(s, 1.0)
                ret += r
            total += ret
        return total / self.n_states


ENVIRONMENTS = {
    "point_reacher": PointReacher,
    "mountain_car": ContinuousMountainCar,
    "lattice_mdp": LatticeMdp,
}


def make_env(name: str, rng=None, **kwargs) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(rng=rng, **kwargs)


def point_reacher(h: float = 0.05, T: int = 100, rng=None) -> PointReacher:
    return PointReacher(h, T, rng)


def continuous_mountain_car(rng=None) -> ContinuousMountainCar:
    return ContinuousMountainCar(rng=rng)


def lattice_mdp(n_states: int = 3, delta_a: float = 1.0, T: int = 10, rng=None) -> LatticeMdp:
    return LatticeMdp(n_states, delta_a, T, rng)
