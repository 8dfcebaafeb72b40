import math

import numpy as np
import pytest

from fsq.core import ConfigError, ShapeError
from fsq.envs import (
    ENVIRONMENTS,
    ContinuousMountainCar,
    ProtocolError,
    continuous_mountain_car,
    lattice_mdp,
    make_env,
    optimal_mean_return,
    optimal_return,
    point_reacher,
    success_threshold,
)


def test_registry_and_descriptors():
    for name in ENVIRONMENTS:
        env = make_env(name, np.random.default_rng(0))
        d = env.descriptor
        assert d.name == name and d.state_dim == len(env.reset())
        assert name in d.describe()
    with pytest.raises(ConfigError, match="unknown environment"):
        make_env("lunar_lander")


@pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
def test_step_protocol(name):
    env = make_env(name, np.random.default_rng(0))
    with pytest.raises(ProtocolError):
        env.step(np.zeros(env.action_spec.dims))
    env.reset()
    with pytest.raises(ShapeError):
        env.step(np.zeros(env.action_spec.dims + 1))


def test_step_after_terminal_raises():
    env = point_reacher(rng=np.random.default_rng(0))
    env.reset_to([0.0, 0.0])
    _, _, terminal = env.step([0.0, 0.0])
    assert terminal
    with pytest.raises(ProtocolError):
        env.step([0.0, 0.0])


def test_reset_is_reproducible():
    for name in ENVIRONMENTS:
        a = make_env(name, np.random.default_rng(3))
        b = make_env(name, np.random.default_rng(3))
        for _ in range(5):
            np.testing.assert_array_equal(a.reset(), b.reset())


def test_point_reacher_start_at_goal():
    env = point_reacher(rng=np.random.default_rng(0))
    env.reset_to([0.0, 0.0])
    state, reward, terminal = env.step([0.5, 0.5])
    assert terminal
    assert reward == pytest.approx(10.0 - math.hypot(*state))


def test_point_reacher_one_step():
    env = point_reacher(rng=np.random.default_rng(0))
    env.reset_to([1.0, 0.0])
    state, reward, terminal = env.step([-1.0, 0.0])
    np.testing.assert_allclose(state, [0.95, 0.0])
    assert reward == pytest.approx(-0.95)
    assert not terminal


def test_point_reacher_clips_and_counts():
    env = point_reacher(rng=np.random.default_rng(0))
    env.reset_to([1.99, 0.0])
    state, _, _ = env.step([3.0, 0.0])
    assert env.clipped_actions == 1
    np.testing.assert_allclose(state, [2.0, 0.0])


def _straight_line_rollout(p0, h=0.05):
    """Drive the real environment along the ray to the origin at full speed."""
    env = point_reacher(h=h, T=10**6, rng=np.random.default_rng(0))
    p = env.reset_to(p0)
    total, done = 0.0, False
    while not done:
        r = math.hypot(*p)
        a = -p / max(abs(p[0]), abs(p[1]))
        if r <= h * math.hypot(*a):
            a = -p / h  # last step lands on the origin
        p, reward, done = env.step(a)
        total += reward
    return total


# starts a whole number of steps from the goal edge are avoided: there the rollout's
# accumulated rounding decides which side of the radius it lands on
@pytest.mark.parametrize("p0", [(1.01, 0.0), (1.3, -0.7), (-2.0, 2.0), (0.2, 0.03), (0.049, 0.0)])
def test_optimal_return_matches_rollout(p0):
    assert optimal_return(p0) == pytest.approx(_straight_line_rollout(np.array(p0)), abs=1e-9)


def test_optimal_mean_return_matches_monte_carlo():
    rng = np.random.default_rng(0)
    starts = rng.uniform(-2, 2, size=(4000, 2))
    samples = np.array([optimal_return(p) for p in starts])
    stderr = samples.std() / math.sqrt(len(samples))
    assert abs(samples.mean() - optimal_mean_return()) < 4 * stderr


def test_success_threshold_for_either_sign():
    assert success_threshold(200.0) == pytest.approx(180.0)
    assert success_threshold(-10.0) == pytest.approx(-11.0)
    env = point_reacher()
    assert env.descriptor.success_threshold == pytest.approx(success_threshold(optimal_mean_return(0.05)))


def test_point_reacher_rejects_bad_step_size():
    with pytest.raises(ConfigError):
        point_reacher(h=0.0)


def test_mountain_car_idle_never_arrives():
    env = continuous_mountain_car(rng=np.random.default_rng(0))
    env.reset_to([-math.pi / 6, 0.0])  # valley floor
    for _ in range(env.max_steps):
        _, reward, terminal = env.step([0.0])
        assert not terminal and reward == 0.0


def test_mountain_car_bang_bang_arrives():
    env = continuous_mountain_car(rng=np.random.default_rng(0))
    for _ in range(5):
        state, total = env.reset(), 0.0
        for _ in range(env.max_steps):
            state, reward, terminal = env.step([1.0 if state[1] >= 0 else -1.0])
            total += reward
            if terminal:
                break
        assert terminal


def test_mountain_car_goal_reward():
    env = ContinuousMountainCar(rng=np.random.default_rng(0))
    env.reset_to([0.44, 0.03])
    _, reward, terminal = env.step([1.0])
    assert terminal and reward == pytest.approx(100.0 - 0.1)


def test_lattice_counts_and_rewards():
    env = lattice_mdp(3, 1.0)
    assert env.n_lattice * env.n_states == 9
    np.testing.assert_array_equal(env.lattice, [-1.0, 0.0, 1.0])
    assert env.transition(2, 1.0) == (2, 1.0)
    assert env.transition(0, -0.5) == (0, -1.0)
    assert env.transition(1, 0.0) == (1, 0.0)
    assert lattice_mdp(3, 0.25).n_lattice == 9


@pytest.mark.parametrize("kw", [{"delta_a": 0.75}, {"delta_a": 0.3}, {"n_states": 21}, {"n_states": 1}])
def test_lattice_rejects_bad_config(kw):
    with pytest.raises(ConfigError):
        lattice_mdp(**kw)


def test_lattice_one_hot():
    env = lattice_mdp(3, 1.0)
    v = env.one_hot_aux([2.0], [-1.0])
    assert v.tolist() == [0.0] * 6 + [1.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        env.lattice_index(0.5)


def test_lattice_optimal_return():
    # from 0: 0, then +1 for the remaining 9 steps; from 1 and 2: +1 every step
    assert lattice_mdp(3, 1.0).optimal_mean_return() == pytest.approx((9 + 10 + 10) / 3)


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
def test_random_steps_stay_finite_and_in_range(name):
    env = make_env(name, np.random.default_rng(1))
    d = env.descriptor
    rng = np.random.default_rng(2)
    low, high = np.array(d.state_low), np.array(d.state_high)
    state = env.reset()
    actions = rng.uniform(-1.0, 1.0, size=(10**6, d.action_spec.dims))
    for t, a in enumerate(actions):
        state, reward, terminal = env.step(a)
        assert math.isfinite(reward)
        assert np.all(state >= low) and np.all(state <= high), (t, state)
        if terminal or t % d.max_steps == d.max_steps - 1:
            state = env.reset()
