"""Uniform ring-buffer replay and proportional prioritized replay.

Both buffers hand out a :class:`Batch` from ``sample``. Each stored slot carries
a sequence number so that priority refreshes aimed at a slot which has since
been overwritten can be detected and dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fsq import kernels
from fsq.core import Transition


class NotReadyError(RuntimeError):
    """Fewer stored transitions than the requested batch size."""


@dataclass
class Batch:
    indices: np.ndarray
    seqs: np.ndarray
    phi: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    phi_next: np.ndarray
    terminals: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.indices)

    def transitions(self) -> list[Transition]:
        return [
            Transition(self.phi[i], self.actions[i], float(self.rewards[i]), self.phi_next[i], bool(self.terminals[i]))
            for i in range(len(self))
        ]


class ReplayBuffer:
    def __init__(self, capacity: int, rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.size = 0
        self.write_cursor = 0
        self.pushed = 0
        self._phi = None

    def __len__(self):
        return self.size

    def _allocate(self, phi_dim, action_dim):
        n = self.capacity
        self._phi = np.zeros((n, phi_dim))
        self._phi_next = np.zeros((n, phi_dim))
        self._actions = np.zeros((n, action_dim), dtype=np.int64)
        self._rewards = np.zeros(n)
        self._terminals = np.zeros(n, dtype=bool)
        self._seqs = np.full(n, -1, dtype=np.int64)

    def add(self, phi, action, reward, phi_next, terminal) -> int:
        """Store one transition; returns the slot written."""
        phi = np.ravel(phi)
        action = np.atleast_1d(action)
        if self._phi is None:
            self._allocate(phi.shape[0], action.shape[0])
        slot = self.write_cursor
        self._phi[slot] = phi
        self._phi_next[slot] = np.ravel(phi_next)
        self._actions[slot] = action
        self._rewards[slot] = reward
        self._terminals[slot] = terminal
        self._seqs[slot] = self.pushed
        self.pushed += 1
        self.write_cursor = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def push(self, t: Transition) -> int:
        return self.add(t.phi, t.direction, t.reward, t.phi_next, t.terminal)

    def _gather(self, idx, weights) -> Batch:
        return Batch(
            indices=idx,
            seqs=self._seqs[idx],
            phi=self._phi[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            phi_next=self._phi_next[idx],
            terminals=self._terminals[idx],
            weights=weights,
        )

    def _check_ready(self, batch_size):
        if self.size < batch_size or self.size == 0:
            raise NotReadyError(f"{self.size} stored transitions, need {batch_size}")

    def sample(self, batch_size: int, beta: float | None = None) -> Batch:
        self._check_ready(batch_size)
        idx = self.rng.integers(0, self.size, size=batch_size)
        return self._gather(idx, np.ones(batch_size))

    def ordered(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""
        if self.size == 0:
            return []
        start = self.write_cursor if self.size == self.capacity else 0
        idx = (start + np.arange(self.size)) % self.capacity
        return self._gather(idx, np.ones(self.size)).transitions()

    def sequence_numbers(self) -> np.ndarray:
        start = self.write_cursor if self.size == self.capacity else 0
        return self._seqs[(start + np.arange(self.size)) % self.capacity].copy()


class SumTree:
    """Binary sum-tree over ``capacity`` leaves (padded to a power of two).

    ``tree[1]`` is the root; leaf ``i`` lives at ``tree[cap + i]``.
    """

    def __init__(self, capacity: int):
        cap = 1
        while cap < capacity:
            cap *= 2
        self.capacity = capacity
        self.tree = np.zeros(2 * cap)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaves(self) -> np.ndarray:
        cap = self.tree.shape[0] // 2
        return self.tree[cap : cap + self.capacity]

    def __getitem__(self, i):
        return self.leaves()[i]

    def update(self, i: int, value: float):
        kernels.sumtree_update(self.tree, int(i), float(value))

    def find(self, masses, size=None) -> np.ndarray:
        """Leaf index whose cumulative-sum interval contains each mass."""
        masses = np.ascontiguousarray(masses, dtype=np.float64)
        return kernels.sumtree_find(self.tree, masses, self.capacity if size is None else int(size))


class PrioritizedReplayBuffer(ReplayBuffer):
    """Proportional prioritized replay.

    Leaves hold ``priority ** alpha``; raw priorities are ``|td| + epsilon``.
    New transitions enter at the largest raw priority currently stored (1.0
    into an empty buffer).
    """

    def __init__(self, capacity, rng=None, alpha=0.6, epsilon=1e-3, importance_sampling=True):
        super().__init__(capacity, rng)
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.alpha = float(alpha)
        self.epsilon_priority = float(epsilon)
        self.importance_sampling = importance_sampling
        self.tree = SumTree(capacity)
        self.priorities = np.zeros(capacity)
        self.stale_updates = 0

    @property
    def max_priority(self) -> float:
        return float(self.priorities[: self.size].max()) if self.size else 1.0

    def add(self, phi, action, reward, phi_next, terminal) -> int:
        p = self.max_priority
        slot = super().add(phi, action, reward, phi_next, terminal)
        self._set_priority(slot, p)
        return slot

    def _set_priority(self, slot, p):
        self.priorities[slot] = p
        self.tree.update(slot, p**self.alpha)

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves()[: self.size]
        return leaves / leaves.sum()

    def sample(self, batch_size: int, beta: float | None = 0.4) -> Batch:
        self._check_ready(batch_size)
        total = self.tree.total
        masses = self.rng.random(batch_size) * total
        idx = self.tree.find(masses, self.size)
        if self.importance_sampling and beta is not None:
            probs = self.tree.leaves()[idx] / total
            w = (self.size * probs) ** (-beta)
            w /= w.max()
        else:
            w = np.ones(batch_size)
        return self._gather(idx, w)

    def update_priorities(self, indices, td_errors, seqs=None):
        """Refresh priorities from TD errors.

        ``td_errors`` may be 1-D or (batch, m); rows are reduced by mean
        absolute value. With ``seqs`` given, slots overwritten since sampling
        are skipped and counted in ``stale_updates``.
        """
        td = np.abs(np.asarray(td_errors, dtype=np.float64))
        if td.ndim == 2:
            td = td.mean(axis=1)
        for k, (slot, err) in enumerate(zip(np.asarray(indices), td)):
            if seqs is not None and self._seqs[slot] != seqs[k]:
                self.stale_updates += 1
                continue
            p = float(err) + self.epsilon_priority
            self._set_priority(int(slot), p)
