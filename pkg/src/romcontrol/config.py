"""Experiment configuration files (YAML) with strict key checking."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .control import OptimizerConfig
from .errors import InvalidInputError
from .models import MBLParams, XYZParams, mbl_layout, xyz_layout

TASKS = ("simulate", "echo", "erase_recover", "transfer")
OUT_ENV = "ROMCONTROL_OUT"


class ConfigError(InvalidInputError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class XYZBlock:
    J: tuple = (0.9, 1.0, 1.1)
    h: tuple = (0.2, 0.2, 0.2)
    tau: float = 0.15


@dataclass
class MBLBlock:
    J: float = 0.3
    include_last_field: bool = False


@dataclass
class ModelConfig:
    kind: str = "xyz"
    n: int = 9
    N: int = 40
    target: int = 0
    xyz: XYZBlock = field(default_factory=XYZBlock)
    mbl: MBLBlock = field(default_factory=MBLBlock)


@dataclass
class TruncationConfig:
    epsilon: float = 0.01
    r_max: int | None = 512


@dataclass
class TaskConfig:
    kind: str = "simulate"
    window: tuple | None = None  # [k_start, k_stop); defaults per task
    echo_k: int | None = None  # time of the single optimized gate
    bob: int = 0
    alice: int | None = None
    one_flip_baseline: bool = True
    two_flip_baseline: bool = True
    random_controls: int = 0  # simulate: number of random control gates
    validate: bool = True  # compare with the exact simulator when it fits
    infoflow: bool = False
    light_cone: bool = False
    light_cone_delta: float = 1e-6


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    model: ModelConfig = field(default_factory=ModelConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seeds: list = field(default_factory=lambda: [0])
    threads: int = 1
    output: str | None = None
    long_running: bool = False

    @property
    def window(self) -> tuple[int, int]:
        t, N = self.task, self.model.N
        if t.window is not None:
            return int(t.window[0]), int(t.window[1])
        if t.kind == "simulate":
            return 0, min(t.random_controls, N)
        return 0, N

    @property
    def echo_k(self) -> int:
        if self.task.echo_k is not None:
            return self.task.echo_k
        k0, k1 = self.window
        return (k0 + k1) // 2

    @property
    def alice(self) -> int:
        return self.model.n - 1 if self.task.alice is None else self.task.alice

    def layout(self, seed: int | None = None, target: int | None = None, initial=()):
        m = self.model
        target = m.target if target is None else target
        if m.kind == "xyz":
            p = XYZParams(tuple(m.xyz.J), tuple(m.xyz.h), m.xyz.tau)
            return xyz_layout(p, m.n, m.N, target, initial)
        seed = self.seeds[0] if seed is None else seed
        p = MBLParams.from_seed(m.mbl.J, m.n, seed, m.mbl.include_last_field)
        return mbl_layout(p, m.N, target, initial)

    def output_dir(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        if self.output is not None:
            return Path(self.output)
        return Path(os.environ.get(OUT_ENV, "runs")) / self.name

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {
    ExperimentConfig: {"model": ModelConfig, "truncation": TruncationConfig, "task": TaskConfig, "optimizer": OptimizerConfig},
    ModelConfig: {"xyz": XYZBlock, "mbl": MBLBlock},
}


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{where + '.' if where else ''}{key}: unknown key")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get(cls, {}).get(key)
        path = f"{where}.{key}" if where else key
        kwargs[key] = _build(sub, value, path) if sub else _coerce(cls, key, value, path)
    try:
        return cls(**kwargs)
    except InvalidInputError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def _coerce(cls, key: str, value, path: str):
    """YAML reads ``1e-4`` as a string; accept it for float-typed fields."""
    ftype = next(f.type for f in dataclasses.fields(cls) if f.name == key)
    if isinstance(value, str) and "float" in str(ftype):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    return value


def _check(cond: bool, where: str, msg: str):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    m, t, tr = cfg.model, cfg.task, cfg.truncation
    _check(m.kind in ("xyz", "mbl"), "model.kind", f"must be 'xyz' or 'mbl', got {m.kind!r}")
    _check(_is_int(m.n) and m.n >= 2, "model.n", "must be an integer >= 2")
    _check(_is_int(m.N) and m.N >= 1, "model.N", "must be a positive integer")
    _check(_is_int(m.target) and 0 <= m.target < m.n, "model.target", f"must lie in [0, {m.n})")
    if m.kind == "xyz":
        _check(len(m.xyz.J) == 3, "model.xyz.J", "must have three components")
        _check(len(m.xyz.h) == 3, "model.xyz.h", "must have three components")
        _check(m.xyz.tau >= 0, "model.xyz.tau", "must be non-negative")
    _check(isinstance(tr.epsilon, (int, float)) and 0 <= tr.epsilon < 1, "truncation.epsilon", "must lie in [0, 1)")
    _check(tr.r_max is None or (_is_int(tr.r_max) and tr.r_max >= 1), "truncation.r_max", "must be a positive integer or null")
    _check(t.kind in TASKS, "task.kind", f"must be one of {', '.join(TASKS)}")
    if t.window is not None:
        _check(len(t.window) == 2 and all(_is_int(x) for x in t.window), "task.window", "must be two integers")
        t.window = tuple(t.window)
    k0, k1 = cfg.window
    _check(0 <= k0 <= k1 <= m.N, "task.window", f"[{k0}, {k1}) must lie within [0, {m.N})")
    if t.kind == "echo":
        _check(k0 <= cfg.echo_k < max(k1, k0 + 1) and cfg.echo_k < m.N, "task.echo_k", f"must lie in the window [{k0}, {k1})")
    if t.kind == "erase_recover":
        _check(m.N % 2 == 0, "model.N", "must be even for erase_recover")
    if t.kind == "transfer":
        _check(_is_int(t.bob) and 0 <= t.bob < m.n, "task.bob", f"must lie in [0, {m.n})")
        _check(_is_int(cfg.alice) and 0 <= cfg.alice < m.n, "task.alice", f"must lie in [0, {m.n})")
        _check(t.bob != cfg.alice, "task.alice", "must differ from task.bob")
    _check(_is_int(t.random_controls) and 0 <= t.random_controls <= m.N, "task.random_controls", f"must lie in [0, {m.N}]")
    _check(t.light_cone_delta > 0, "task.light_cone_delta", "must be positive")
    _check(isinstance(cfg.seeds, list) and len(cfg.seeds) >= 1 and all(_is_int(s) for s in cfg.seeds), "seeds", "must be a non-empty list of integers")
    _check(_is_int(cfg.threads) and cfg.threads >= 1, "threads", "must be a positive integer")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    cfg.model.xyz.J = tuple(cfg.model.xyz.J)
    cfg.model.xyz.h = tuple(cfg.model.xyz.h)
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return from_dict(data or {})


def dump_config(cfg: ExperimentConfig, path) -> None:
    data = cfg.to_dict()
    data["model"]["xyz"]["J"] = list(cfg.model.xyz.J)
    data["model"]["xyz"]["h"] = list(cfg.model.xyz.h)
    if cfg.task.window is not None:
        data["task"]["window"] = list(cfg.task.window)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)
