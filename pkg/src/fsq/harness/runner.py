"""Run orchestration behind the CLI: train, eval, oracle-check, bench."""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fsq import agent as fsq_agent
from fsq import dqn
from fsq.approximator import QNetwork, load_checkpoint, network_arrays, save_checkpoint, set_network_arrays
from fsq.core import ActionSpaceSpec, ConfigError, EpisodeRecord, NumericError
from fsq.envs import Env, make_env
from fsq.harness.config import RunConfig, parse_config
from fsq.harness.plot import rolling_mean, write_svg_plot
from fsq.harness.seeding import RunStreams, make_streams
from fsq.kernels import BACKEND
from fsq.oracle import (
    dump_q_csv,
    lattice_action_set_mdp,
    lattice_direction_mdp,
    lattice_initial_states,
    reachable_states,
    value_iteration,
)

EXIT_SUCCESS = 0
EXIT_CONFIG = 1
EXIT_EXHAUSTED = 2
EXIT_NUMERIC = 3
EXIT_ENV_FAULT = 4

CURVE_HEADER = ("episode", "steps", "return", "epsilon", "mean_loss")
ROLLING_WINDOW = 100
ORACLE_TOLERANCE = 0.05  # fraction of the reward span


def build_env(config: RunConfig, rng: np.random.Generator) -> Env:
    if config.env_name == "lattice_mdp":
        return make_env("lattice_mdp", rng, n_states=config.n_states, delta_a=config.delta_a)
    return make_env(config.env_name, rng)


def fsq_spec(env: Env, delta_a: float) -> ActionSpaceSpec:
    box = env.action_spec
    return ActionSpaceSpec(box.low, box.high, np.full(box.dims, delta_a))


def build_agent(config: RunConfig, env: Env, streams: RunStreams):
    d = env.descriptor
    one_hot = config.encoding == "one_hot"
    if config.algo == "fsq":
        encoder, dim = (env.one_hot_aux, env.n_states * env.n_lattice) if one_hot else (None, None)
        return fsq_agent.FsqAgent(d.state_dim, fsq_spec(env, config.delta_a), config.agent, rng=streams.init,
                                  replay_rng=streams.replay, encoder=encoder, feature_dim=dim)
    action_set = dqn.cartesian_discretize(d.action_spec, config.levels)
    encoder, dim = (env.one_hot_state, env.n_states) if one_hot else (None, None)
    return dqn.DqnAgent(d.state_dim, action_set, config.agent, rng=streams.init, replay_rng=streams.replay,
                        encoder=encoder, feature_dim=dim)


def run_episodes(agent, env: Env, episodes: int, rng, sink=None, stop=None) -> list[EpisodeRecord]:
    if isinstance(agent, dqn.DqnAgent):
        return dqn.run_dqn_episodes(agent, env, episodes, rng, sink, stop)
    return fsq_agent.train(agent, env, episodes, rng, sink, stop)


def greedy_returns(agent, env: Env, episodes: int) -> list[float]:
    if isinstance(agent, dqn.DqnAgent):
        return dqn.greedy_rollout(agent, env, episodes)
    return fsq_agent.greedy_rollout(agent, env, episodes)


def format_record(rec: EpisodeRecord) -> list[str]:
    return [str(rec.episode_index), str(rec.steps), repr(rec.undiscounted_return), repr(rec.epsilon),
            repr(rec.mean_loss)]


class CurveWriter:
    """Streams one CSV row per finished episode."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(CURVE_HEADER)

    def __call__(self, rec: EpisodeRecord):
        self._writer.writerow(format_record(rec))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def best_rolling_mean(returns, window: int = ROLLING_WINDOW) -> float | None:
    """Best mean over complete windows, or ``None`` before the first one fills."""
    if len(returns) < window:
        return None
    csum = np.cumsum(np.insert(np.asarray(returns, dtype=np.float64), 0, 0.0))
    return float(np.max((csum[window:] - csum[:-window]) / window))


@dataclass
class TrainOutcome:
    exit_code: int
    records: list[EpisodeRecord] = field(default_factory=list)
    agent: object = None
    threshold: float | None = None
    best_rolling: float | None = None
    message: str = ""


def checkpoint_meta(config: RunConfig, agent) -> dict[str, str]:
    meta = {"algo": config.algo, "env": config.env_name, "global_step": str(agent.global_step),
            "backend": BACKEND}
    # the output path is not part of the model; leaving it out keeps reruns byte-identical
    meta.update({f"config.{k}": v for k, v in config.to_pairs().items() if k != "out_dir"})
    return meta


def save_agent(path, config: RunConfig, agent):
    arrays = {**network_arrays(agent.online_net, "online"), **network_arrays(agent.target_net, "target")}
    if isinstance(agent, dqn.DqnAgent):
        arrays["actions"] = agent.action_set.actions
    save_checkpoint(path, arrays, checkpoint_meta(config, agent))


def config_from_meta(meta: dict[str, str]) -> RunConfig:
    lines = [f"{k[len('config.'):]}={v}" for k, v in meta.items() if k.startswith("config.")]
    if not lines:
        raise ConfigError("checkpoint carries no config echo")
    return parse_config("\n".join(lines), source="<checkpoint config>")


def train_from_config(config: RunConfig, log: Callable[[str], None] = print) -> TrainOutcome:
    out = config.check_out_dir()
    streams = make_streams(config.seed)
    env = build_env(config, streams.env)
    agent = build_agent(config, env, streams)
    threshold = env.descriptor.success_threshold
    outcome = TrainOutcome(EXIT_EXHAUSTED, agent=agent, threshold=threshold)
    try:
        with CurveWriter(out / "curve.csv") as sink:
            outcome.records = run_episodes(agent, env, config.episodes, streams.agent, sink)
    except NumericError as exc:
        outcome.exit_code = EXIT_NUMERIC
        outcome.message = (f"numeric abort at global step {agent.global_step} after {agent.numeric_faults} "
                           f"skipped updates: {exc}")
    except fsq_agent.EnvFault as exc:
        outcome.exit_code = EXIT_ENV_FAULT
        outcome.message = f"environment fault: {exc}"
    save_agent(out / "checkpoint.fsq", config, agent)
    if outcome.message:
        return outcome

    returns = [r.undiscounted_return for r in outcome.records]
    outcome.best_rolling = best_rolling_mean(returns)
    if returns:
        last = float(rolling_mean(returns, ROLLING_WINDOW)[-1])
        best = "n/a" if outcome.best_rolling is None else f"{outcome.best_rolling:.4f}"
        log(f"episodes={len(returns)} rolling{ROLLING_WINDOW}_mean={last:.4f} best_rolling={best} "
            f"threshold={threshold}")
        write_svg_plot(out / "curve.csv", out / "curve.svg", ROLLING_WINDOW, threshold,
                       f"{config.algo} on {config.env_name}, seed {config.seed}")
    else:
        log("episodes=0: nothing trained")
    if threshold is not None and outcome.best_rolling is not None and outcome.best_rolling >= threshold:
        outcome.exit_code = EXIT_SUCCESS
    return outcome


def run_train(config: RunConfig, log: Callable[[str], None] = print) -> int:
    outcome = train_from_config(config, log)
    if outcome.message:
        print(outcome.message, file=sys.stderr)
    return outcome.exit_code


def run_eval(checkpoint, env_name: str | None = None, episodes: int = 100, seed: int = 0,
             log: Callable[[str], None] = print) -> float:
    """Mean greedy return of a saved agent."""
    arrays, meta = load_checkpoint(checkpoint)
    config = config_from_meta(meta)
    if env_name is not None and env_name != config.env_name:
        raise ConfigError(f"env: checkpoint was trained on {config.env_name!r}, not {env_name!r}")
    streams = make_streams(seed)
    env = build_env(config, streams.env)
    agent = build_agent(config, env, streams)
    set_network_arrays(agent.online_net, arrays, "online")
    set_network_arrays(agent.target_net, arrays, "target")
    returns = greedy_returns(agent, env, episodes)
    mean = float(np.mean(returns)) if returns else math.nan
    log(f"{config.algo} on {config.env_name}: mean greedy return over {episodes} episodes = {mean:.4f}")
    return mean


@dataclass
class OracleReport:
    deviation: float
    tolerance: float
    episodes: int
    q_star: np.ndarray
    q_learned: np.ndarray
    compared: np.ndarray  # boolean mask of oracle states included
    mdp: object = None

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


class OracleProblem:
    """Value-iteration Q* for the agent's view of a lattice MDP."""

    def __init__(self, config: RunConfig, env):
        gamma = config.agent.gamma
        if config.algo == "fsq":
            self.mdp = lattice_direction_mdp(env, gamma, config.agent.execute_updated_action)
            self.compared = reachable_states(self.mdp, lattice_initial_states(env))
        else:
            actions = dqn.cartesian_discretize(env.action_spec, config.levels).actions
            self.mdp = lattice_action_set_mdp(env, actions, gamma)
            self.compared = np.ones(self.mdp.n_states, dtype=bool)
        self.q_star = value_iteration(self.mdp, tol=1e-10).Q
        self.tolerance = ORACLE_TOLERANCE * env.reward_span()

    def learned(self, net: QNetwork) -> np.ndarray:
        # one-hot inputs index oracle states directly
        return net(np.eye(self.mdp.n_states))

    def deviation(self, net: QNetwork) -> float:
        return float(np.max(np.abs(self.learned(net) - self.q_star)[self.compared]))


def oracle_check(config: RunConfig, network: QNetwork | None = None,
                 log: Callable[[str], None] = print) -> OracleReport:
    if config.env_name != "lattice_mdp":
        raise ConfigError(f"env: oracle-check needs lattice_mdp, got {config.env_name!r}")
    config.encoding = "one_hot"
    streams = make_streams(config.seed)
    env = build_env(config, streams.env)
    problem = OracleProblem(config, env)
    episodes = 0
    if network is None:
        agent = build_agent(config, env, streams)
        network = agent.online_net
        deviation = problem.deviation(network)
        while deviation > problem.tolerance and episodes < config.episodes:
            block = min(config.eval_every, config.episodes - episodes)
            run_episodes(agent, env, block, streams.agent)
            episodes += block
            deviation = problem.deviation(network)
            log(f"episode {episodes}: max |Q - Q*| = {deviation:.5f}")
    deviation = problem.deviation(network)
    return OracleReport(deviation, problem.tolerance, episodes, problem.q_star, problem.learned(network),
                        problem.compared, problem.mdp)


def run_oracle_check(config: RunConfig, network: QNetwork | None = None,
                     log: Callable[[str], None] = print) -> int:
    try:
        report = oracle_check(config, network, log)
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    verdict = "PASS" if report.passed else "FAIL"
    log(f"oracle-check {verdict}: max deviation {report.deviation:.6f} vs tolerance {report.tolerance:.6f} "
        f"after {report.episodes} episodes")
    dump_q_csv(config.check_out_dir() / "oracle_q.csv", report.mdp, report.q_star, report.q_learned)
    return EXIT_SUCCESS if report.passed else EXIT_EXHAUSTED


@dataclass(frozen=True)
class BenchRow:
    m: int
    fsq_heads: int
    cartesian_actions: int

    @property
    def ratio(self) -> float:
        return self.cartesian_actions / self.fsq_heads


def bench_discretization(m_list, k: int) -> list[BenchRow]:
    """Output-head counts of FSQ (3m) against a k-level grid (k**m), by arithmetic."""
    rows = []
    for m in m_list:
        heads, actions = dqn.discretization_counts(int(m), int(k))
        rows.append(BenchRow(int(m), heads, actions))
    return rows


def format_bench(rows: list[BenchRow], k: int) -> str:
    lines = [f"{'m':>4} {'fsq_heads':>10} {'cartesian_actions(k=' + str(k) + ')':>26} {'ratio':>14}"]
    for r in rows:
        lines.append(f"{r.m:>4} {r.fsq_heads:>10} {r.cartesian_actions:>26} {r.ratio:>14.6g}")
    return "\n".join(lines)
