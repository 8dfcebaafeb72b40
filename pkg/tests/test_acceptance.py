"""Acceptance gate: one test per headline criterion, each printing a PASS/FAIL line."""

import statistics
import time

import numpy as np
import pytest
from gradcheck import fsq_problem, relative_error
from scipy import stats

from fsq.agent import FsqAgent, greedy_directions
from fsq.approximator import QNetwork, parameters_equal
from fsq.core import ActionSpaceSpec, AgentConfig
from fsq.envs import ENVIRONMENTS
from fsq.harness import RunConfig, bench_discretization, load_config, train_from_config
from fsq.harness.runner import oracle_check
from fsq.kernels import BACKEND
from fsq.replay import PrioritizedReplayBuffer

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    """Print ``ACCEPTANCE <name>: PASS|FAIL <detail>`` past pytest's capture, then assert."""

    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"{name}: {detail}"

    return emit


def _quiet(_msg):
    pass


def test_oracle_equivalence(report):
    config = load_config("configs/lattice_oracle.cfg")
    assert (config.n_states, config.delta_a, config.agent.gamma, config.episodes) == (3, 1.0, 0.9, 10_000)
    start = time.perf_counter()
    result = oracle_check(config, log=_quiet)
    elapsed = time.perf_counter() - start
    report("oracle_equivalence", result.passed and elapsed < 60.0,
           f"max|Q-Q*|={result.deviation:.4f} tol={result.tolerance:.4f} episodes={result.episodes} "
           f"time={elapsed:.1f}s (limit 60s)")


def test_learning_point_reacher(report, tmp_path):
    start = time.perf_counter()
    best, threshold = [], None
    for seed in range(5):
        config = RunConfig(env_name="point_reacher", algo="fsq", episodes=500, seed=seed,
                           out_dir=str(tmp_path / f"seed{seed}"))
        assert (config.delta_a, config.agent.hidden_units, config.agent.gamma) == (0.75, 128, 0.99)
        outcome = train_from_config(config, log=_quiet)
        threshold = outcome.threshold
        best.append(outcome.best_rolling if outcome.best_rolling is not None else -np.inf)
    elapsed = time.perf_counter() - start
    median = statistics.median(best)
    report("learning_point_reacher", median >= threshold and elapsed < 300.0,
           f"median best rolling-100 return={median:.3f} threshold={threshold:.3f} "
           f"seeds={[round(b, 3) for b in best]} time={elapsed:.1f}s (limit 300s)")


def test_complexity(report):
    rows = {r.m: (r.fsq_heads, r.cartesian_actions) for r in bench_discretization([1, 2, 4, 10], 3)}
    heads_ok = all(rows[m][0] == 3 * m for m in rows)
    outputs = {m: FsqAgent(3, ActionSpaceSpec.box(m), AgentConfig(hidden_units=8),
                           rng=np.random.default_rng(0)).online_net.W2.shape[1] for m in (1, 2, 4, 10)}
    ok = heads_ok and rows[2] == (6, 9) and rows[10] == (30, 59049) and all(outputs[m] == 3 * m for m in outputs)
    report("complexity", ok, f"bench={rows} network_output_units={outputs}")


def test_gradient_correctness(report):
    rng = np.random.default_rng(2024)
    worst = {}
    for m in (1, 2, 4):
        errs = [relative_error(*fsq_problem(rng, m)) for _ in range(10)]
        worst[m] = max(errs)
    ok = max(worst.values()) <= 1e-4
    report("gradient_correctness", ok,
           f"backend={BACKEND} worst relative error per m={ {m: f'{e:.2e}' for m, e in worst.items()} } (limit 1e-4)")


def test_shift_invariance(report):
    rng = np.random.default_rng(7)
    mismatches, total = 0, 0
    for m in (1, 2, 4, 8):
        net = QNetwork.for_fsq(3, m, 128, rng)
        outputs = net(rng.normal(size=(2500, 3 + m)))
        mismatches += int(np.sum(np.any(greedy_directions(outputs) != greedy_directions(outputs, offset=1.0), axis=1)))
        total += len(outputs)
    report("shift_invariance", mismatches == 0 and total == 10_000,
           f"{mismatches} disagreements over {total} network outputs")


def _draw(buf, n):
    return np.concatenate([buf.sample(len(buf)).indices for _ in range(n // len(buf))])


def test_replay_statistics(report):
    buf = PrioritizedReplayBuffer(2, np.random.default_rng(11), alpha=1.0, epsilon=0.0)
    for i in range(2):
        buf.add(np.zeros(2), [0], 0.0, np.zeros(2), False)
    buf.update_priorities([0, 1], [3.0, 1.0])
    freq = np.bincount(_draw(buf, 100_000), minlength=2) / 100_000
    uni = PrioritizedReplayBuffer(6, np.random.default_rng(12), alpha=0.0)
    for i in range(6):
        uni.add(np.zeros(2), [0], 0.0, np.zeros(2), False)
    uni.update_priorities(np.arange(6), [10.0, 1.0, 0.1, 3.0, 0.0, 7.0])
    pvalue = stats.chisquare(np.bincount(_draw(uni, 100_002), minlength=6)).pvalue
    ok = abs(freq[0] - 0.75) <= 0.02 and abs(freq[1] - 0.25) <= 0.02 and pvalue > 0.01
    report("replay_statistics", ok, f"alpha=1 frequencies={freq.round(4).tolist()} alpha=0 chi-square p={pvalue:.3f}")


def test_determinism(report, tmp_path):
    episodes = {"point_reacher": 20, "mountain_car": 3, "lattice_mdp": 50}
    differing = []
    for name in sorted(ENVIRONMENTS):
        for algo in ("fsq", "dqn"):
            curves = []
            for run in ("a", "b"):
                config = RunConfig(env_name=name, algo=algo, episodes=episodes[name], seed=5,
                                   delta_a=1.0 if name == "lattice_mdp" else 0.75,
                                   out_dir=str(tmp_path / f"{name}_{algo}_{run}"))
                train_from_config(config, log=_quiet)
                curves.append((tmp_path / f"{name}_{algo}_{run}" / "curve.csv").read_bytes())
            if curves[0] != curves[1]:
                differing.append(f"{name}/{algo}")
    report("determinism", not differing,
           f"byte-identical curve.csv for {len(ENVIRONMENTS)} envs x (fsq, dqn); differing={differing}")


def test_target_sync(report):
    config = AgentConfig(hidden_units=16, batch_size=8, target_update_interval=1000)
    agent = FsqAgent(2, ActionSpaceSpec.box(2), config, rng=np.random.default_rng(0),
                     replay_rng=np.random.default_rng(1))
    rng = np.random.default_rng(2)
    for _ in range(64):
        agent.buffer.add(rng.normal(size=4), rng.integers(-1, 2, 2), float(rng.normal()), rng.normal(size=4),
                         False)
    held = agent.target_net.theta.copy()
    violations = []
    for _ in range(3500):
        agent.learn_step()
        step = agent.global_step
        if step % 1000 == 0:
            if not parameters_equal(agent.online_net, agent.target_net):
                violations.append(f"step {step}: target differs from online")
            held = agent.target_net.theta.copy()
        elif not np.array_equal(agent.target_net.theta, held):
            violations.append(f"step {step}: target moved between syncs")
    ok = not violations and agent.syncs == 3
    report("target_sync", ok, f"C=1000 over {agent.global_step} steps, syncs={agent.syncs}, violations={violations[:3]}")


def test_dqn_lattice_sanity(report):
    config = load_config("configs/lattice_dqn.cfg")
    assert (config.algo, config.levels, config.delta_a, config.agent.gamma) == ("dqn", 3, 1.0, 0.9)
    start = time.perf_counter()
    result = oracle_check(config, log=_quiet)
    elapsed = time.perf_counter() - start
    report("dqn_lattice_sanity", result.passed,
           f"max|Q-Q*|={result.deviation:.4f} tol={result.tolerance:.4f} episodes={result.episodes} "
           f"time={elapsed:.1f}s")
