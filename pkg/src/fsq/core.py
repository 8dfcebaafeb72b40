"""Domain types shared by the agents, environments and the harness.

Directions are plain integer arrays with entries in {-1, 0, +1}; the helpers
here validate them and map them onto output heads of the auxiliary Q-function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np


class InvalidDirectionError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    """Raised when a non-finite value reaches a network or optimizer."""


class ConfigError(ValueError):
    pass


# head index (1-based) for each direction value
_HEAD_OF = {-1: 1, 0: 2, 1: 3}
_DIRECTION_OF = {1: -1, 2: 0, 3: 1}


def direction_to_index(d_elem: int) -> int:
    if d_elem in _HEAD_OF:
        return _HEAD_OF[int(d_elem)]
    raise InvalidDirectionError(f"direction must be -1, 0 or +1, got {d_elem!r}")


def index_to_direction(k: int) -> int:
    if k in _DIRECTION_OF:
        return _DIRECTION_OF[int(k)]
    raise InvalidDirectionError(f"head index must be 1, 2 or 3, got {k!r}")


def as_direction(d, dims: int | None = None) -> np.ndarray:
    """Validate ``d`` and return it as an int64 vector."""
    arr = np.asarray(d)
    if arr.ndim != 1:
        raise ShapeError(f"direction vector must be 1-D, got shape {arr.shape}")
    if dims is not None and arr.shape[0] != dims:
        raise ShapeError(f"direction vector has length {arr.shape[0]}, expected {dims}")
    if not set(arr.tolist()) <= {-1, 0, 1}:
        raise InvalidDirectionError(f"direction entries must lie in {{-1, 0, 1}}: {arr}")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class ActionSpaceSpec:
    """Continuous action box with a per-coordinate increment."""

    low: np.ndarray
    high: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        delta = np.asarray(self.delta, dtype=np.float64)
        if delta.ndim == 0:
            delta = np.full_like(low, float(delta))
        if not (low.shape == high.shape == delta.shape) or low.ndim != 1 or low.size == 0:
            raise ShapeError("low, high and delta must be non-empty vectors of equal length")
        if not np.all(low < high):
            raise ConfigError(f"need low < high element-wise, got {low} and {high}")
        if not np.all((delta > 0) & (delta <= high - low)):
            raise ConfigError(f"need 0 < delta <= high - low, got delta={delta}")
        for name, arr in (("low", low), ("high", high), ("delta", delta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def box(cls, dims: int, low: float = -1.0, high: float = 1.0, delta: float = 0.75):
        return cls(np.full(dims, low), np.full(dims, high), np.full(dims, delta))

    @property
    def dims(self) -> int:
        return int(self.low.shape[0])

    def clip(self, a) -> np.ndarray:
        return np.clip(np.asarray(a, dtype=np.float64), self.low, self.high)

    def initial_action(self) -> np.ndarray:
        return self.clip(np.zeros(self.dims))

    def contains(self, a) -> bool:
        a = np.asarray(a, dtype=np.float64)
        return a.shape == self.low.shape and bool(np.all((a >= self.low) & (a <= self.high)))


def integrate_action(a, d, spec: ActionSpaceSpec) -> np.ndarray:
    """One finite step: ``clip(a + d * delta, low, high)``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (spec.dims,):
        raise ShapeError(f"action has shape {a.shape}, expected ({spec.dims},)")
    d = as_direction(d, spec.dims)
    return np.clip(a + d * spec.delta, spec.low, spec.high)


@dataclass(frozen=True)
class AuxiliaryState:
    """Environment state paired with the current action, v = (s, a)."""

    state: np.ndarray
    action: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.state), np.ravel(self.action)]).astype(np.float64)


@dataclass(frozen=True)
class Transition:
    phi: np.ndarray
    direction: np.ndarray
    reward: float
    phi_next: np.ndarray
    terminal: bool

    def __post_init__(self):
        if np.shape(self.phi) != np.shape(self.phi_next):
            raise ShapeError(
                f"phi and phi_next differ in shape: {np.shape(self.phi)} vs {np.shape(self.phi_next)}"
            )


@dataclass(frozen=True)
class EpisodeRecord:
    episode_index: int
    steps: int
    undiscounted_return: float
    epsilon: float
    mean_loss: float

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("an episode has at least one step")


class TargetIndexMode(str, enum.Enum):
    STORED_DIRECTION = "stored_direction"
    PAPER_LITERAL = "paper_literal"


@dataclass
class AgentConfig:
    # defaults follow the FSQ example hyperparameters
    memory_size: int = 50000
    target_update_interval: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.0005
    gamma: float = 0.99
    eps_max: float = 1.0
    eps_min: float = 0.1
    eps_decay: float = 0.001
    hidden_units: int = 128
    use_per: bool = False
    use_double_q: bool = False
    target_index_mode: TargetIndexMode = TargetIndexMode.STORED_DIRECTION
    execute_updated_action: bool = True
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_steps: int = 100000
    per_epsilon: float = 1e-3
    importance_sampling: bool = True

    def __post_init__(self):
        self.target_index_mode = TargetIndexMode(self.target_index_mode)
        self.validate()

    def validate(self):
        def bad(key, why):
            raise ConfigError(f"{key}: {why} (got {getattr(self, key)!r})")

        if not 0 < self.gamma <= 1:
            bad("gamma", "must lie in (0, 1]")
        if not 0 <= self.eps_min <= 1:
            bad("eps_min", "must lie in [0, 1]")
        if not 0 <= self.eps_max <= 1:
            bad("eps_max", "must lie in [0, 1]")
        if self.eps_min > self.eps_max:
            bad("eps_min", "must not exceed eps_max")
        if self.eps_decay < 0:
            bad("eps_decay", "must be non-negative")
        for key in ("memory_size", "target_update_interval", "batch_size", "hidden_units"):
            if int(getattr(self, key)) < 1:
                bad(key, "must be a positive integer")
        if self.batch_size > self.memory_size:
            bad("batch_size", "must not exceed memory_size")
        if not self.learning_rate > 0:
            bad("learning_rate", "must be positive")
        if self.per_alpha < 0:
            bad("per_alpha", "must be non-negative")
        if not 0 <= self.per_beta_start <= 1:
            bad("per_beta_start", "must lie in [0, 1]")
        if self.per_epsilon <= 0:
            bad("per_epsilon", "must be positive")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def epsilon_at(self, step: int) -> float:
        return self.eps_min + (self.eps_max - self.eps_min) * float(np.exp(-self.eps_decay * step))
