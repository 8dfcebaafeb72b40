"""Flat ``key=value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key is optional; missing
agent keys take the FSQ example hyperparameters. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from fsq.core import AgentConfig, ConfigError, TargetIndexMode
from fsq.envs import ENVIRONMENTS

ALGORITHMS = ("fsq", "dqn")
ENCODINGS = ("concat", "one_hot")


class ConfigParseError(ConfigError):
    def __init__(self, path, lineno: int, line: str, why: str):
        super().__init__(f"{path}:{lineno}: {why}: {line.strip()!r}")
        self.lineno = lineno


@dataclass
class RunConfig:
    env_name: str = "point_reacher"
    algo: str = "fsq"
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 500
    seed: int = 0
    out_dir: str = "runs/default"
    delta_a: float = 0.75
    encoding: str = "concat"
    levels: int = 3  # per-dimension grid size for DQN
    n_states: int = 3  # lattice_mdp only
    eval_every: int = 100  # oracle-check comparison interval, in episodes

    def validate(self):
        self.agent.validate()
        if self.env_name not in ENVIRONMENTS:
            raise ConfigError(f"env: unknown environment {self.env_name!r}; choose from {sorted(ENVIRONMENTS)}")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo: must be one of {ALGORITHMS} (got {self.algo!r})")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"encoding: must be one of {ENCODINGS} (got {self.encoding!r})")
        if self.encoding == "one_hot" and self.env_name != "lattice_mdp":
            raise ConfigError("encoding: one_hot is only defined for lattice_mdp")
        if self.episodes < 0:
            raise ConfigError(f"episodes: must be non-negative (got {self.episodes})")
        if not self.delta_a > 0:
            raise ConfigError(f"delta_a: must be positive (got {self.delta_a})")
        if self.levels < 2:
            raise ConfigError(f"levels: need at least 2 (got {self.levels})")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every: must be positive (got {self.eval_every})")
        return self

    def check_out_dir(self) -> Path:
        out = Path(self.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"out_dir: cannot create {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"out_dir: {out} is not writable")
        return out

    def to_pairs(self) -> dict[str, str]:
        """Every key with its value as written to a config file."""
        pairs = {}
        for key, name in _RUN_KEYS.items():
            pairs[key] = _format(getattr(self, name))
        for name in AgentConfig.field_names():
            pairs[name] = _format(getattr(self.agent, name))
        return pairs


# config-file key -> RunConfig attribute
_RUN_KEYS = {
    "env": "env_name",
    "algo": "algo",
    "episodes": "episodes",
    "seed": "seed",
    "out_dir": "out_dir",
    "delta_a": "delta_a",
    "encoding": "encoding",
    "levels": "levels",
    "n_states": "n_states",
    "eval_every": "eval_every",
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, TargetIndexMode):
        return value.value
    return str(value)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(default):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, TargetIndexMode):
        return TargetIndexMode
    return str


def parse_config(text: str, source="<config>") -> RunConfig:
    run_defaults = {f.name: f.default for f in dataclasses.fields(RunConfig) if f.name != "agent"}
    agent_defaults = {f.name: f.default for f in dataclasses.fields(AgentConfig)}

    run_values, agent_values = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigParseError(source, lineno, raw, "expected key=value")
        if key in _RUN_KEYS:
            name = _RUN_KEYS[key]
            convert, target = _converter(run_defaults[name]), run_values
        elif key in agent_defaults:
            name = key
            convert, target = _converter(agent_defaults[key]), agent_values
        else:
            raise ConfigParseError(source, lineno, raw, f"unknown key {key!r}")
        if name in target:
            raise ConfigParseError(source, lineno, raw, f"duplicate key {key!r}")
        try:
            target[name] = convert(value)
        except ValueError as exc:
            raise ConfigParseError(source, lineno, raw, f"bad value for {key}: {exc}") from None

    agent = AgentConfig(**agent_values)
    return RunConfig(agent=agent, **run_values).validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), source=path)


def save_config(config: RunConfig, path):
    lines = [f"{k}={v}" for k, v in config.to_pairs().items()]
    Path(path).write_text("\n".join(lines) + "\n")
