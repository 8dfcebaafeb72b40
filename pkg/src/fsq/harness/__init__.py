"""Configuration, seeding, run orchestration and the command-line interface."""

from fsq.harness.config import RunConfig, load_config, parse_config, save_config
from fsq.harness.runner import (
    bench_discretization,
    run_eval,
    run_oracle_check,
    run_train,
    train_from_config,
)
from fsq.harness.seeding import make_streams

__all__ = [
    "RunConfig",
    "bench_discretization",
    "load_config",
    "make_streams",
    "parse_config",
    "run_eval",
    "run_oracle_check",
    "run_train",
    "save_config",
    "train_from_config",
]
