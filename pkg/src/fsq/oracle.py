"""Exact solvers used to check the learners.

``value_iteration`` solves the optimal Bellman equations of a finite MDP;
``tabular_q_learning`` is the classic sampled update. The ``lattice_*``
builders turn a :class:`~fsq.envs.LatticeMdp` into finite MDPs: one over
(state, lattice action) pairs with directions as actions (what FSQ sees), one
over states with a discrete action set (what DQN sees).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from fsq.core import ConfigError


@dataclass
class FiniteMdp:
    transition: np.ndarray  # (S, A, S')
    reward: np.ndarray  # (S, A)
    gamma: float
    state_labels: list = field(default_factory=list)
    action_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        S, A = self.reward.shape
        if self.transition.shape != (S, A, S):
            raise ConfigError(f"transition tensor has shape {self.transition.shape}, expected {(S, A, S)}")
        if np.any(self.transition < 0) or not np.allclose(self.transition.sum(axis=2), 1.0, rtol=0, atol=1e-12):
            raise ConfigError("every transition row must be a probability distribution")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]


@dataclass
class ValueIterationResult:
    V: np.ndarray
    Q: np.ndarray
    residuals: list

    def __iter__(self):
        return iter((self.V, self.Q))


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> ValueIterationResult:
    Q = np.zeros_like(mdp.reward)
    residuals = []
    for _ in range(max_iter):
        V = Q.max(axis=1)
        Q_new = mdp.reward + mdp.gamma * mdp.transition @ V
        delta = float(np.max(np.abs(Q_new - Q)))
        residuals.append(delta)
        Q = Q_new
        if delta < tol:
            break
    else:
        raise RuntimeError(f"value iteration did not reach tol={tol} in {max_iter} sweeps")
    return ValueIterationResult(Q.max(axis=1), Q, residuals)


def tabular_q_learning(mdp: FiniteMdp, alpha: float, episodes: int, rng: np.random.Generator,
                       epsilon: float = 0.1, horizon: int = 20, start_states=None) -> np.ndarray:
    """Epsilon-greedy tabular Q-learning with a fixed step size."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    S, A = mdp.reward.shape
    starts = np.arange(S) if start_states is None else np.asarray(start_states)
    cdf = np.cumsum(mdp.transition, axis=2)
    Q = np.zeros((S, A))
    for _ in range(episodes):
        s = int(starts[rng.integers(len(starts))])
        for _t in range(horizon):
            if rng.random() < epsilon:
                a = int(rng.integers(A))
            else:
                a = int(np.argmax(Q[s]))
            s_next = min(int(np.searchsorted(cdf[s, a], rng.random(), side="right")), S - 1)
            target = mdp.reward[s, a] + mdp.gamma * Q[s_next].max()
            Q[s, a] += alpha * (target - Q[s, a])
            s = s_next
    return Q


def monte_carlo_q(mdp: FiniteMdp, policy: np.ndarray, rng: np.random.Generator,
                  rollouts: int = 100, horizon: int = 200) -> np.ndarray:
    """Estimate Q^policy(s, a) by rolling out ``policy`` after taking ``a``.

    Rollouts for every (s, a) pair run in parallel; returns are truncated at
    ``horizon`` steps.
    """
    S, A = mdp.reward.shape
    cdf = np.cumsum(mdp.transition, axis=2)
    est = np.zeros((S, A))
    for s0 in range(S):
        for a0 in range(A):
            s = np.full(rollouts, s0)
            a = np.full(rollouts, a0)
            ret = np.zeros(rollouts)
            disc = 1.0
            for _ in range(horizon):
                ret += disc * mdp.reward[s, a]
                u = rng.random(rollouts)
                s = np.minimum((cdf[s, a] <= u[:, None]).sum(axis=1), S - 1)
                a = policy[s]
                disc *= mdp.gamma
            est[s0, a0] = ret.mean()
    return est


def reachable_states(mdp: FiniteMdp, starts) -> np.ndarray:
    """Boolean mask of states reachable from ``starts`` under any actions."""
    seen = np.zeros(mdp.n_states, dtype=bool)
    frontier = list(starts)
    seen[frontier] = True
    while frontier:
        s = frontier.pop()
        for s_next in np.nonzero(mdp.transition[s].sum(axis=0))[0]:
            if not seen[s_next]:
                seen[s_next] = True
                frontier.append(int(s_next))
    return seen


def lattice_direction_mdp(env, gamma: float, execute_updated_action: bool = True) -> FiniteMdp:
    """FSQ's view of a lattice MDP: states (s, lattice action), actions d.

    State index is ``s * L + i`` with ``i`` the lattice index of the current
    action; action index is ``d + 1``.
    """
    L, n = env.n_lattice, env.n_states
    S = n * L
    P = np.zeros((S, 3, S))
    R = np.zeros((S, 3))
    for s in range(n):
        for i in range(L):
            a = env.lattice[i]
            for k, d in enumerate((-1, 0, 1)):
                i_next = min(max(i + d, 0), L - 1)
                executed = env.lattice[i_next] if execute_updated_action else a
                s_next, r = env.transition(s, executed)
                P[s * L + i, k, s_next * L + i_next] = 1.0
                R[s * L + i, k] = r
    labels = [(s, float(env.lattice[i])) for s in range(n) for i in range(L)]
    return FiniteMdp(P, R, gamma, labels, [-1, 0, 1])


def lattice_initial_states(env) -> list[int]:
    """Augmented states an episode can start in: any s, action 0."""
    i0 = env.lattice_index(0.0)
    return [s * env.n_lattice + i0 for s in range(env.n_states)]


def lattice_action_set_mdp(env, actions, gamma: float) -> FiniteMdp:
    """DQN's view of a lattice MDP: states s, actions from a discrete set."""
    actions = [float(np.ravel(a)[0]) for a in actions]
    n = env.n_states
    P = np.zeros((n, len(actions), n))
    R = np.zeros((n, len(actions)))
    for s in range(n):
        for k, a in enumerate(actions):
            s_next, r = env.transition(s, a)
            P[s, k, s_next] = 1.0
            R[s, k] = r
    return FiniteMdp(P, R, gamma, list(range(n)), actions)


def dump_q_csv(path, mdp: FiniteMdp, Q: np.ndarray, learned: np.ndarray | None = None):
    """Write one row per (state, action) with the oracle (and learned) value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "action", "q_star"] + (["q_learned", "abs_error"] if learned is not None else []))
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                row = [
                    mdp.state_labels[s] if mdp.state_labels else s,
                    mdp.action_labels[a] if mdp.action_labels else a,
                    repr(float(Q[s, a])),
                ]
                if learned is not None:
                    row += [repr(float(learned[s, a])), repr(float(abs(learned[s, a] - Q[s, a])))]
                w.writerow(row)
