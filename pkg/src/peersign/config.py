"""Experiment configuration: flat key=value files with CLI-flag overrides.

A config file is the reproducible manifest of one experiment; every value
can also be supplied (or overridden) as a command-line flag. Unknown keys
are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .errors import ConfigError
from .opinion import OpinionVariant, PeerPolicy
from .qubo import TabuParams
from .trainer import TrainConfig

REGIMES = ("raw", "averaged", "balanced")


@dataclass
class ExperimentConfig:
    dataset: str = ""
    format: str = "edges"
    variant: str = "standard-pq"
    p: int = 15
    q: int = 20
    d: int = 10
    lambda_min: float = 0.1
    lambda_max: float = 0.35
    lambda_step: float = 0.05
    solver: str = "exact"
    tabu_iters: int = 0        # 0: derive from instance size
    tabu_time_ms: int = 1000   # 0: no per-subproblem time limit
    seed: int = 0
    regime: str = "raw"
    workers: int = 0           # 0: hardware parallelism
    out: str = "out"
    test_fraction: float = 0.1
    rating_threshold: int = 3

    def validate(self) -> "ExperimentConfig":
        OpinionVariant.parse(self.variant)
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.format not in ("edges", "ratings", "wikielec"):
            raise ConfigError(f"unknown dataset format {self.format!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")
        self.to_train_config()  # revalidates d / lambda grid / solver
        return self

    def to_policy(self) -> PeerPolicy:
        try:
            return PeerPolicy(variant=OpinionVariant.parse(self.variant),
                              p=self.p, q=self.q)
        except Exception as exc:
            raise ConfigError(str(exc)) from exc

    def to_train_config(self) -> TrainConfig:
        tabu = TabuParams(
            max_iterations=self.tabu_iters or None,
            time_limit=(self.tabu_time_ms / 1000.0) if self.tabu_time_ms else None,
            seed=self.seed,
        )
        return TrainConfig(
            policy=self.to_policy(),
            d=self.d,
            lambda_min=self.lambda_min,
            lambda_max=self.lambda_max,
            lambda_step=self.lambda_step,
            solver=self.solver,
            tabu=tabu,
            seed=self.seed,
        )

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_COERCE = {"int": int, "float": float, "str": str}


def _coerce(key: str, value: str):
    kind = _FIELDS[key]
    caster = _COERCE.get(kind, str)
    try:
        return caster(value)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {value!r} as {kind}") from exc


def load_config_file(path) -> dict:
    """Parse `key=value` lines; `#` starts a comment; unknown keys rejected."""
    values: dict = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _coerce(key, value.strip())
    return values


def build_config(file_path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Config file first, then CLI overrides (None values skipped)."""
    values = load_config_file(file_path) if file_path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    cfg = ExperimentConfig(**values)
    return cfg.validate()
