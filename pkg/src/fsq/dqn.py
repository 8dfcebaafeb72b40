"""Baseline DQN over a finite action set, and the cartesian grid that feeds it.

A k-level grid over an m-dimensional box has k**m actions, one output head
each; :func:`discretization_counts` gives the head counts for FSQ and the grid
without building anything.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from fsq.agent import DeepQAgent, _env_step, _record
from fsq.core import ActionSpaceSpec, AgentConfig, EpisodeRecord
from fsq.replay import Batch

DEFAULT_ACTION_CAP = 10**6


class DiscretizationBlowupError(ValueError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"cartesian discretization needs {count} actions, above the cap of {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class DiscreteActionSet:
    actions: np.ndarray  # (count, m)

    @property
    def count(self) -> int:
        return int(self.actions.shape[0])

    def __len__(self):
        return self.count

    def __getitem__(self, i) -> np.ndarray:
        return self.actions[i]


def discretization_counts(m: int, k: int) -> tuple[int, int]:
    """(FSQ heads, cartesian actions) for m action dims and k levels."""
    if k < 2:
        raise ValueError("need at least 2 levels per dimension")
    return 3 * m, k**m


def cartesian_discretize(spec: ActionSpaceSpec, k: int, cap: int = DEFAULT_ACTION_CAP) -> DiscreteActionSet:
    _, count = discretization_counts(spec.dims, k)
    if count > cap:
        raise DiscretizationBlowupError(count, cap)
    levels = [np.linspace(lo, hi, k) for lo, hi in zip(spec.low, spec.high)]
    grid = np.array(list(itertools.product(*levels)), dtype=np.float64).reshape(count, spec.dims)
    return DiscreteActionSet(grid)


def identity_features(state) -> np.ndarray:
    return np.ravel(state).astype(np.float64)


class DqnAgent(DeepQAgent):
    def __init__(self, state_dim: int, action_set: DiscreteActionSet, config: AgentConfig | None = None,
                 rng=None, replay_rng=None, encoder: Callable | None = None, feature_dim: int | None = None):
        config = config or AgentConfig()
        rng = rng if rng is not None else np.random.default_rng()
        self.action_set = action_set
        self.state_dim = state_dim
        self.encoder = encoder or identity_features
        input_dim = feature_dim if feature_dim is not None else state_dim
        super().__init__(input_dim, action_set.count, config, rng, replay_rng)

    def features(self, state) -> np.ndarray:
        return self.encoder(state)

    def select_action(self, phi, rng: np.random.Generator, epsilon: float | None = None) -> int:
        eps = self.epsilon if epsilon is None else epsilon
        explore = rng.random() < eps
        random_a = int(rng.integers(self.action_set.count))
        if explore:
            return random_a
        return int(np.argmax(self.online_net(phi)))

    def build_targets(self, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
        B, c = len(batch), self.config
        q_next = self.target_net(batch.phi_next)
        if c.use_double_q:
            pick = np.argmax(self.online_net(batch.phi_next), axis=1)
            boot = q_next[np.arange(B), pick]
        else:
            boot = q_next.max(axis=1)
        values = batch.rewards + c.gamma * (~batch.terminals) * boot
        taken = batch.actions[:, 0]
        targets = np.zeros((B, self.action_set.count))
        mask = np.zeros_like(targets, dtype=bool)
        targets[np.arange(B), taken] = values
        mask[np.arange(B), taken] = True
        return targets, mask


def dqn_train(env, action_set: DiscreteActionSet, config: AgentConfig | None, rng: np.random.Generator,
              sink: Callable | None = None, episodes: int = 1, agent: DqnAgent | None = None,
              replay_rng=None, init_rng=None, stop: Callable | None = None) -> list[EpisodeRecord]:
    """Train a DQN for ``episodes``; pass ``agent`` to keep hold of it."""
    if agent is None:
        agent = DqnAgent(env.descriptor.state_dim, action_set, config,
                         rng=init_rng if init_rng is not None else rng, replay_rng=replay_rng)
    return run_dqn_episodes(agent, env, episodes, rng, sink, stop)


def run_dqn_episodes(agent: DqnAgent, env, episodes: int, rng, sink=None, stop=None) -> list[EpisodeRecord]:
    records = []
    for episode in range(episodes):
        s = env.reset()
        phi = agent.features(s)
        total, losses, steps = 0.0, [], 0
        for t in range(env.max_steps):
            k = agent.select_action(phi, rng)
            s, r, terminal = _env_step(env, agent.action_set[k], episode, t)
            phi_next = agent.features(s)
            agent.buffer.add(phi, k, r, phi_next, terminal)
            loss = agent.learn_step()
            if loss is not None:
                losses.append(loss)
            total += r
            steps += 1
            phi = phi_next
            if terminal:
                break
        records.append(_record(episode, steps, total, agent.epsilon, losses))
        if sink is not None:
            sink(records[-1])
        if stop is not None and stop(records):
            break
    return records


def greedy_rollout(agent: DqnAgent, env, episodes: int) -> list[float]:
    returns = []
    for _ in range(episodes):
        s = env.reset()
        total = 0.0
        for _t in range(env.max_steps):
            k = int(np.argmax(agent.online_net(agent.features(s))))
            s, r, terminal = env.step(agent.action_set[k])
            total += r
            if terminal:
                break
        returns.append(total)
    return returns
