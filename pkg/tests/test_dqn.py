import numpy as np
import pytest

from fsq.agent import FsqAgent
from fsq.core import ActionSpaceSpec, AgentConfig, Transition
from fsq.dqn import (
    DiscretizationBlowupError,
    DqnAgent,
    cartesian_discretize,
    discretization_counts,
    dqn_train,
    greedy_rollout,
)
from fsq.envs import lattice_mdp, point_reacher
from fsq.oracle import lattice_action_set_mdp, value_iteration
from fsq.replay import Batch


def test_three_levels_on_square():
    actions = cartesian_discretize(ActionSpaceSpec.box(2), 3)
    assert actions.count == 9
    assert sorted(set(actions.actions[:, 0].tolist())) == [-1.0, 0.0, 1.0]
    assert {tuple(a) for a in actions.actions} == {(x, y) for x in (-1.0, 0.0, 1.0) for y in (-1.0, 0.0, 1.0)}


def test_two_levels_are_the_endpoints():
    assert cartesian_discretize(ActionSpaceSpec.box(1), 2).actions.ravel().tolist() == [-1.0, 1.0]


def test_blowup_error_reports_count():
    with pytest.raises(DiscretizationBlowupError, match="59049") as info:
        cartesian_discretize(ActionSpaceSpec.box(10), 3, cap=10**4)
    assert info.value.count == 59049


def test_counts_are_arithmetic():
    assert discretization_counts(2, 3) == (6, 9)
    assert discretization_counts(1, 3) == (3, 3)
    assert discretization_counts(10, 3) == (30, 59049)
    assert discretization_counts(40, 5) == (120, 5**40)
    with pytest.raises(ValueError):
        discretization_counts(2, 1)


def test_output_head_counts():
    actions = cartesian_discretize(ActionSpaceSpec.box(2), 3)
    agent = DqnAgent(2, actions, AgentConfig(hidden_units=8), rng=np.random.default_rng(0))
    assert agent.online_net.output_dim == 9
    fsq = FsqAgent(2, ActionSpaceSpec.box(2), AgentConfig(hidden_units=8), rng=np.random.default_rng(0))
    assert fsq.online_net.output_dim == 6


def _batch(actions, rewards, terminals, dim=2):
    n = len(actions)
    return Batch(np.arange(n), np.arange(n), np.zeros((n, dim)), np.array(actions).reshape(n, 1),
                 np.array(rewards, dtype=float), np.ones((n, dim)), np.array(terminals), np.ones(n))


def test_single_head_targets():
    actions = cartesian_discretize(ActionSpaceSpec.box(1), 3)
    agent = DqnAgent(2, actions, AgentConfig(hidden_units=8, gamma=0.5), rng=np.random.default_rng(0))
    agent.target_net.W2[...] = 0.0
    agent.target_net.b2[...] = [1.0, 4.0, 2.0]
    targets, mask = agent.build_targets(_batch([2, 0], [1.0, 3.0], [False, True]))
    assert mask.sum(axis=1).tolist() == [1, 1]
    assert targets[0, 2] == 1.0 + 0.5 * 4.0
    assert targets[1, 0] == 3.0


def test_dqn_updates_one_head_where_fsq_updates_m():
    rng = np.random.default_rng(0)
    fsq = FsqAgent(2, ActionSpaceSpec.box(3), AgentConfig(hidden_units=8), rng=rng)
    _, fsq_mask = fsq.build_targets([Transition(np.zeros(5), np.array([1, 0, -1]), 0.0, np.zeros(5), False)])
    dqn = DqnAgent(2, cartesian_discretize(ActionSpaceSpec.box(3), 3), AgentConfig(hidden_units=8), rng=rng)
    _, dqn_mask = dqn.build_targets(_batch([13], [0.0], [False]))
    assert fsq_mask.sum() == 3 and dqn_mask.sum() == 1


def test_double_q_targets():
    actions = cartesian_discretize(ActionSpaceSpec.box(1), 3)
    agent = DqnAgent(2, actions, AgentConfig(hidden_units=8, gamma=1.0, use_double_q=True),
                     rng=np.random.default_rng(0))
    agent.online_net.W2[...] = 0.0
    agent.online_net.b2[...] = [3.0, 0.0, 0.0]
    agent.target_net.W2[...] = 0.0
    agent.target_net.b2[...] = [5.0, 9.0, 9.0]
    targets, _ = agent.build_targets(_batch([1], [0.0], [False]))
    assert targets[0, 1] == 5.0


def test_dqn_train_is_deterministic():
    def run():
        env = point_reacher(rng=np.random.default_rng(1))
        actions = cartesian_discretize(env.action_spec, 3)
        return dqn_train(env, actions, AgentConfig(hidden_units=8, batch_size=8), np.random.default_rng(2),
                         episodes=3, replay_rng=np.random.default_rng(3), init_rng=np.random.default_rng(4))

    assert run() == run()


def test_two_state_chain_matches_oracle():
    # two-state lattice: landing on the right state pays +1, on the left -1
    env = lattice_mdp(n_states=2, rng=np.random.default_rng(0))
    actions = cartesian_discretize(env.action_spec, 3)
    config = AgentConfig(gamma=0.5, batch_size=16, memory_size=2000, target_update_interval=100,
                         learning_rate=0.005, hidden_units=32, eps_decay=0.01)
    agent = DqnAgent(1, actions, config, rng=np.random.default_rng(1), replay_rng=np.random.default_rng(2),
                     encoder=env.one_hot_state, feature_dim=2)
    q_star = value_iteration(lattice_action_set_mdp(env, actions.actions, 0.5)).Q
    dqn_train(env, actions, config, np.random.default_rng(3), episodes=300, agent=agent)
    assert np.max(np.abs(agent.online_net(np.eye(2)) - q_star)) <= 0.05 * env.reward_span()
    assert greedy_rollout(agent, env, 5) == [env.optimal_mean_return()] * 5
