import csv

import numpy as np
import pytest

from fsq.core import ConfigError
from fsq.envs import lattice_mdp
from fsq.oracle import (
    FiniteMdp,
    dump_q_csv,
    lattice_action_set_mdp,
    lattice_direction_mdp,
    lattice_initial_states,
    monte_carlo_q,
    reachable_states,
    tabular_q_learning,
    value_iteration,
)


def _one_state(reward=1.0, gamma=0.99):
    return FiniteMdp(np.ones((1, 1, 1)), np.array([[reward]]), gamma)


def test_single_state_geometric_value():
    V, Q = value_iteration(_one_state())
    assert Q[0, 0] == pytest.approx(100.0, abs=1e-8)
    assert V[0] == Q[0, 0]


def test_zero_discount_gives_reward():
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(4), size=(4, 3))
    R = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(value_iteration(FiniteMdp(P, R, 0.0)).Q, R)


def test_residuals_shrink_and_v_is_max_q():
    rng = np.random.default_rng(1)
    mdp = FiniteMdp(rng.dirichlet(np.ones(5), size=(5, 2)), rng.normal(size=(5, 2)), 0.9)
    result = value_iteration(mdp)
    assert all(b <= a + 1e-15 for a, b in zip(result.residuals, result.residuals[1:]))
    np.testing.assert_array_equal(result.V, result.Q.max(axis=1))
    # fixed point of the Bellman optimality operator
    np.testing.assert_allclose(mdp.reward + mdp.gamma * mdp.transition @ result.V, result.Q, atol=1e-9)


def test_lattice_q_star_matches_monte_carlo():
    env = lattice_mdp(3, 1.0)
    mdp = lattice_direction_mdp(env, 0.9)
    Q = value_iteration(mdp).Q
    estimate = monte_carlo_q(mdp, Q.argmax(axis=1), np.random.default_rng(0), rollouts=4, horizon=400)
    # deterministic dynamics: rollouts agree, truncation error is 0.9**400
    np.testing.assert_allclose(estimate, Q, atol=0.01)


def test_lattice_q_star_by_hand():
    env = lattice_mdp(3, 1.0)
    Q = value_iteration(lattice_action_set_mdp(env, [-1.0, 0.0, 1.0], 0.5)).Q
    # V = (1, 2, 2): from the right edge +1 forever is 1 / (1 - 0.5)
    np.testing.assert_allclose(Q[:, 2], [0.0 + 0.5 * 2.0, 1.0 + 0.5 * 2.0, 1.0 + 0.5 * 2.0])
    np.testing.assert_allclose(Q[:, 0], [-1.0 + 0.5 * 1.0, -1.0 + 0.5 * 1.0, 0.0 + 0.5 * 2.0])


def test_q_learning_one_step_is_reward():
    rng = np.random.default_rng(2)
    mdp = FiniteMdp(rng.dirichlet(np.ones(3), size=(3, 2)), rng.normal(size=(3, 2)), 0.0)
    Q = tabular_q_learning(mdp, 1.0, 500, np.random.default_rng(3), epsilon=1.0, horizon=5)
    np.testing.assert_array_equal(Q, mdp.reward)


def test_q_learning_converges_on_lattice():
    env = lattice_mdp(3, 1.0)
    mdp = lattice_direction_mdp(env, 0.9)
    Q_star = value_iteration(mdp).Q
    Q = tabular_q_learning(mdp, 0.5, 10_000, np.random.default_rng(4), epsilon=0.3, horizon=10)
    assert np.max(np.abs(Q - Q_star)) <= 0.05 * env.reward_span()


def test_q_learning_is_seeded():
    mdp = lattice_direction_mdp(lattice_mdp(3, 1.0), 0.9)
    a = tabular_q_learning(mdp, 0.3, 200, np.random.default_rng(5))
    b = tabular_q_learning(mdp, 0.3, 200, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        tabular_q_learning(mdp, 0.0, 1, np.random.default_rng(0))


@pytest.mark.parametrize(
    "P, R, gamma",
    [
        (np.ones((2, 1, 1)), np.zeros((2, 1)), 0.9),
        (np.full((1, 1, 2), 0.4), np.zeros((1, 1)), 0.9),
        (np.ones((1, 1, 1)), np.zeros((1, 1)), 1.5),
    ],
)
def test_finite_mdp_validation(P, R, gamma):
    with pytest.raises(ConfigError):
        FiniteMdp(P, R, gamma)


def test_reachable_lattice_states():
    env = lattice_mdp(3, 1.0)
    mdp = lattice_direction_mdp(env, 0.9)
    mask = reachable_states(mdp, lattice_initial_states(env))
    assert mask.sum() == 7
    # holding +1 always moves right, so the left edge is never seen with +1 (and vice versa)
    assert [mdp.state_labels[i] for i in np.nonzero(~mask)[0]] == [(0, 1.0), (2, -1.0)]


def test_dump_q_csv(tmp_path):
    mdp = lattice_action_set_mdp(lattice_mdp(2, 1.0), [-1.0, 1.0], 0.5)
    Q = value_iteration(mdp).Q
    path = tmp_path / "q.csv"
    dump_q_csv(path, mdp, Q, learned=Q + 0.25)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 4
    assert [float(r["q_star"]) for r in rows] == Q.ravel().tolist()
    assert {float(r["abs_error"]) for r in rows} == {0.25}
