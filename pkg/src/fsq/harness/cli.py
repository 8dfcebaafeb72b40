"""Command-line entry point: ``fsq train|eval|oracle-check|bench-discretization|list-envs``."""

from __future__ import annotations

import argparse
import logging
import sys

from fsq.core import ConfigError
from fsq.envs import ENVIRONMENTS, make_env
from fsq.harness import runner
from fsq.harness.config import ALGORITHMS, RunConfig, load_config


def _int_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.replace(" ", "").split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsq", description="Finite Step Q-learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log numeric warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent and write curve.csv, checkpoint and plot")
    p.add_argument("--config", help="key=value config file; omitted keys take defaults")
    p.add_argument("--env", choices=sorted(ENVIRONMENTS))
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("eval", help="greedy rollouts of a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env", choices=sorted(ENVIRONMENTS))
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle-check", help="train on lattice_mdp and compare with value iteration")
    p.add_argument("--config", required=True)

    p = sub.add_parser("bench-discretization", help="FSQ head count against a cartesian grid")
    p.add_argument("--dims", type=_int_list, required=True, help="comma-separated action dimensions, e.g. 1,2,4")
    p.add_argument("--levels", type=int, default=3, help="grid levels per dimension (k >= 2)")

    sub.add_parser("list-envs", help="print environment descriptors")
    return parser


def _train_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {"env_name": args.env, "algo": args.algo, "seed": args.seed, "episodes": args.episodes,
                 "out_dir": args.out}
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    return config.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "train":
            return runner.run_train(_train_config(args))
        if args.command == "eval":
            runner.run_eval(args.checkpoint, args.env, args.episodes, args.seed)
            return runner.EXIT_SUCCESS
        if args.command == "oracle-check":
            return runner.run_oracle_check(load_config(args.config))
        if args.command == "bench-discretization":
            if args.levels < 2:
                raise ConfigError("levels: need at least 2")
            print(runner.format_bench(runner.bench_discretization(args.dims, args.levels), args.levels))
            return runner.EXIT_SUCCESS
        if args.command == "list-envs":
            for name in sorted(ENVIRONMENTS):
                print(make_env(name).descriptor.describe())
            return runner.EXIT_SUCCESS
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    return runner.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
