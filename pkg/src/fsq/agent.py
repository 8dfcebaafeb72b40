"""Finite Step Q-learning agent and the training machinery it shares with DQN.

The FSQ network sees the auxiliary state ``v = (s, a)`` and emits ``3m`` heads,
one block of three per action coordinate. Acting picks a direction in
{-1, 0, +1} per coordinate and moves the action by ``d * delta``; learning
regresses one head in every block of every replayed transition.
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from fsq.approximator import (
    AdamState,
    QNetwork,
    adam_step,
    clone_parameters,
    copy_parameters,
    loss_and_grads,
)
from fsq.core import (
    ActionSpaceSpec,
    AgentConfig,
    AuxiliaryState,
    EpisodeRecord,
    InvalidDirectionError,
    NumericError,
    TargetIndexMode,
    Transition,
    integrate_action,
)
from fsq.replay import Batch, PrioritizedReplayBuffer, ReplayBuffer

log = logging.getLogger(__name__)

# consecutive skipped updates tolerated before training gives up
MAX_NUMERIC_FAULTS = 10


class EnvFault(RuntimeError):
    pass


def greedy_directions(q_out, offset: float = 0.0) -> np.ndarray:
    """Per-block argmax of a flat 3m output, mapped to {-1, 0, +1}.

    ``offset`` is subtracted before the argmax; it exists so tests can show
    that a constant shift never changes the choice. Ties go to the lowest head.
    """
    q = np.asarray(q_out, dtype=np.float64)
    blocks = q.reshape(q.shape[:-1] + (-1, 3))
    if offset:
        blocks = blocks - offset
    return np.argmax(blocks, axis=-1) - 1


def concat_features(state, action) -> np.ndarray:
    return np.concatenate([np.ravel(state), np.ravel(action)]).astype(np.float64)


class DeepQAgent:
    """Online/target networks, Adam, replay and the epsilon schedule.

    Subclasses provide ``build_targets(batch) -> (targets, mask)``.
    """

    def __init__(self, input_dim: int, output_dim: int, config: AgentConfig, rng: np.random.Generator,
                 replay_rng: np.random.Generator | None = None, action_dims: int | None = None):
        self.config = config
        self.online_net = QNetwork(input_dim, config.hidden_units, output_dim, rng, action_dims=action_dims)
        self.target_net = clone_parameters(self.online_net)
        self.optimizer = AdamState.for_network(self.online_net)
        replay_rng = replay_rng if replay_rng is not None else np.random.default_rng(rng.integers(2**63))
        if config.use_per:
            self.buffer = PrioritizedReplayBuffer(
                config.memory_size, replay_rng, alpha=config.per_alpha, epsilon=config.per_epsilon,
                importance_sampling=config.importance_sampling,
            )
        else:
            self.buffer = ReplayBuffer(config.memory_size, replay_rng)
        self.global_step = 0
        self.updates = 0
        self.syncs = 0
        self.numeric_faults = 0
        self._consecutive_faults = 0

    @property
    def epsilon(self) -> float:
        return self.config.epsilon_at(self.global_step)

    @property
    def beta(self) -> float:
        c = self.config
        frac = min(1.0, self.global_step / max(1, c.per_beta_steps))
        return c.per_beta_start + frac * (1.0 - c.per_beta_start)

    def build_targets(self, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sync_target(self):
        copy_parameters(self.online_net, self.target_net)
        self.syncs += 1

    def learn_step(self) -> float | None:
        """One replay update, then advance the global step.

        Returns the minibatch loss, or ``None`` if the buffer is not ready or
        the update was aborted on a non-finite value. The target network is
        synced whenever the global step reaches a multiple of C.
        """
        loss = None
        if len(self.buffer) >= self.config.batch_size:
            loss = self._update()
        self.global_step += 1
        if self.global_step % self.config.target_update_interval == 0:
            self.sync_target()
        return loss

    def _update(self) -> float | None:
        c = self.config
        batch = self.buffer.sample(c.batch_size, self.beta)
        targets, mask = self.build_targets(batch)
        weights = batch.weights if c.use_per and c.importance_sampling else None
        try:
            loss, grads, pred = loss_and_grads(self.online_net, batch.phi, targets, mask, weights)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss {loss}")
            adam_step(self.online_net, grads, self.optimizer, c.learning_rate)
        except NumericError as exc:
            self.numeric_faults += 1
            self._consecutive_faults += 1
            log.warning("update aborted at step %d: %s", self.global_step, exc)
            if self._consecutive_faults >= MAX_NUMERIC_FAULTS:
                raise
            return None
        self._consecutive_faults = 0
        self.updates += 1
        if c.use_per:
            td = (targets - pred)[mask].reshape(len(batch), -1)
            self.buffer.update_priorities(batch.indices, td, batch.seqs)
        return loss


class FsqAgent(DeepQAgent):
    def __init__(self, state_dim: int, spec: ActionSpaceSpec, config: AgentConfig | None = None,
                 rng: np.random.Generator | None = None, replay_rng: np.random.Generator | None = None,
                 encoder: Callable | None = None, feature_dim: int | None = None):
        config = config or AgentConfig()
        rng = rng if rng is not None else np.random.default_rng()
        self.spec = spec
        self.state_dim = state_dim
        self.encoder = encoder or concat_features
        input_dim = feature_dim if feature_dim is not None else state_dim + spec.dims
        super().__init__(input_dim, 3 * spec.dims, config, rng, replay_rng, action_dims=spec.dims)

    def features(self, state, action) -> np.ndarray:
        return self.encoder(state, action)

    def _as_features(self, v) -> np.ndarray:
        if isinstance(v, AuxiliaryState):
            return self.features(v.state, v.action)
        return np.asarray(v, dtype=np.float64)

    def select_directions(self, v, rng: np.random.Generator, epsilon: float | None = None) -> np.ndarray:
        """Epsilon-greedy direction, drawn independently per coordinate."""
        eps = self.epsilon if epsilon is None else epsilon
        m = self.spec.dims
        explore = rng.random(m) < eps
        random_d = rng.integers(-1, 2, size=m)
        if explore.all():
            return random_d
        greedy = greedy_directions(self.online_net(self._as_features(v)))
        return np.where(explore, random_d, greedy)

    def act(self, state, action, rng: np.random.Generator, epsilon: float | None = None):
        """Return ``(executed_action, d)`` for the current (s, a)."""
        d = self.select_directions(self.features(state, action), rng, epsilon)
        a_next = integrate_action(action, d, self.spec)
        executed = a_next if self.config.execute_updated_action else np.asarray(action, dtype=np.float64)
        return executed, d

    def build_targets(self, batch) -> tuple[np.ndarray, np.ndarray]:
        """Targets for all m blocks of every transition, plus the head mask.

        Accepts a replay :class:`Batch` or a list of :class:`Transition`.
        """
        if not isinstance(batch, Batch):
            batch = _batch_from_transitions(batch)
        B, m = len(batch), self.spec.dims
        c = self.config
        q_next = self.target_net(batch.phi_next).reshape(B, m, 3)
        if c.use_double_q:
            pick = np.argmax(self.online_net(batch.phi_next).reshape(B, m, 3), axis=2)
            boot = np.take_along_axis(q_next, pick[..., None], axis=2)[..., 0]
        else:
            boot = q_next.max(axis=2)
        live = (~batch.terminals).astype(np.float64)
        values = batch.rewards[:, None] + c.gamma * live[:, None] * boot
        if c.target_index_mode is TargetIndexMode.STORED_DIRECTION:
            d = batch.actions.reshape(B, m)
            if d.min() < -1 or d.max() > 1:
                raise InvalidDirectionError("replayed direction outside {-1, 0, 1}")
            heads = d + 1
        else:
            heads = np.argmax(self.target_net(batch.phi).reshape(B, m, 3), axis=2)
        flat = (3 * np.arange(m) + heads).ravel() + np.repeat(3 * m * np.arange(B), m)
        targets = np.zeros(B * 3 * m)
        mask = np.zeros(B * 3 * m, dtype=bool)
        targets[flat] = values.ravel()
        mask[flat] = True
        return targets.reshape(B, 3 * m), mask.reshape(B, 3 * m)


def _batch_from_transitions(transitions: list[Transition]) -> Batch:
    n = len(transitions)
    if n == 0:
        raise ValueError("empty batch")
    return Batch(
        indices=np.arange(n),
        seqs=np.arange(n),
        phi=np.array([t.phi for t in transitions], dtype=np.float64),
        actions=np.array([np.atleast_1d(t.direction) for t in transitions], dtype=np.int64),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        phi_next=np.array([t.phi_next for t in transitions], dtype=np.float64),
        terminals=np.array([t.terminal for t in transitions], dtype=bool),
        weights=np.ones(n),
    )


def _env_step(env, action, episode, t):
    try:
        return env.step(action)
    except Exception as exc:
        raise EnvFault(f"environment {type(env).__name__} failed at episode {episode}, step {t}: {exc}") from exc


def _record(episode, steps, total, eps, losses):
    mean_loss = float(np.mean(losses)) if losses else float("nan")
    return EpisodeRecord(episode, steps, float(total), float(eps), mean_loss)


def train(agent: FsqAgent, env, episodes: int, rng: np.random.Generator, sink: Callable | None = None,
          stop: Callable | None = None) -> list[EpisodeRecord]:
    """Run ``episodes`` FSQ episodes; each starts from the zero action.

    ``sink`` receives every :class:`EpisodeRecord` as it completes. ``stop``
    is called with the records so far and may end training early.
    """
    if env.action_spec.dims != agent.spec.dims:
        raise ValueError(f"env has {env.action_spec.dims} action dims, agent expects {agent.spec.dims}")
    spec, cfg = agent.spec, agent.config
    records = []
    for episode in range(episodes):
        s = env.reset()
        a = spec.initial_action()
        phi = agent.features(s, a)
        total, losses, steps = 0.0, [], 0
        for t in range(env.max_steps):
            d = agent.select_directions(phi, rng)
            a_next = integrate_action(a, d, spec)
            executed = a_next if cfg.execute_updated_action else a
            s, r, terminal = _env_step(env, executed, episode, t)
            phi_next = agent.features(s, a_next)
            agent.buffer.add(phi, d, r, phi_next, terminal)
            loss = agent.learn_step()
            if loss is not None:
                losses.append(loss)
            total += r
            steps += 1
            phi, a = phi_next, a_next
            if terminal:
                break
        records.append(_record(episode, steps, total, agent.epsilon, losses))
        if sink is not None:
            sink(records[-1])
        if stop is not None and stop(records):
            break
    return records


def greedy_rollout(agent: FsqAgent, env, episodes: int) -> list[float]:
    """Undiscounted returns of the epsilon=0 policy."""
    returns = []
    for _ in range(episodes):
        s = env.reset()
        a = agent.spec.initial_action()
        total = 0.0
        for _t in range(env.max_steps):
            d = greedy_directions(agent.online_net(agent.features(s, a)))
            a_next = integrate_action(a, d, agent.spec)
            s, r, terminal = env.step(a_next if agent.config.execute_updated_action else a)
            total += r
            a = a_next
            if terminal:
                break
        returns.append(total)
    return returns
