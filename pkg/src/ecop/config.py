"""Run configuration: a flat YAML mapping with strict, line-aware validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

ALGORITHMS = ("ecop", "ppo_lagrangian", "p3o_penalty", "ipoce_exact")
POLICY_KINDS = ("auto", "tabular_softmax", "time_conditioned_net")
OPTIMIZERS = ("sgd", "adam")
ACTIVATIONS = ("tanh", "relu")
COST_SURROGATES = ("pessimistic", "literal")


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    env: str = "hazard_gridworld"
    env_overrides: dict = field(default_factory=dict)
    algorithm: str = "ecop"
    seeds: tuple = (0, 1, 2, 3, 4)
    episodes: int = 500
    batch_episodes: int = 16
    lr: float = 3e-4
    optimizer: str = "adam"
    epsilon_clip: float = 0.2
    beta: float = 5.0
    update_factor: float = 1.5
    beta_max: float = 20.0
    adaptive_beta: bool = True
    lambda_init: float = 0.0
    n_inner: int = 1
    critic_epochs: int = 20
    critic_lr: float = 1e-3
    policy: str = "auto"
    hidden_sizes: tuple = (32, 32)
    activation: str = "tanh"
    log_std_init: float = 0.5
    lagrange_lr: float = 0.05
    kappa: float = 1.0
    constraints: tuple | None = None  # 1-based indices of penalised costs; None means all
    cost_surrogate: str = "pessimistic"
    normalize_advantages: bool = True
    grid_resolution: int = 4
    out_dir: str | None = None
    record_wallclock: bool = False

    def __post_init__(self):
        _validate(self)

    def replace(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        for k, v in data.items():
            if isinstance(v, tuple):
                data[k] = list(v)
        return data

    def digest(self) -> str:
        data = self.to_dict()
        data.pop("out_dir")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


_TYPES = {
    "env": str, "env_overrides": dict, "algorithm": str, "seeds": "int_list", "episodes": int,
    "batch_episodes": int, "lr": float, "optimizer": str, "epsilon_clip": float, "beta": float,
    "update_factor": float, "beta_max": float, "adaptive_beta": bool, "lambda_init": float,
    "n_inner": int, "critic_epochs": int, "critic_lr": float, "policy": str,
    "hidden_sizes": "int_list", "activation": str, "log_std_init": float, "lagrange_lr": float,
    "kappa": float, "constraints": "opt_int_list", "cost_surrogate": str,
    "normalize_advantages": bool, "grid_resolution": int, "out_dir": "opt_str",
    "record_wallclock": bool,
}


def _coerce(name: str, value, kind):
    def bad():
        return ValueError(f"field {name!r} expects {kind if isinstance(kind, str) else kind.__name__}, "
                          f"got {value!r}")

    if kind == "int_list" or kind == "opt_int_list":
        if value is None and kind == "opt_int_list":
            return None
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) and not isinstance(v, bool)
                                                          for v in value):
            raise bad()
        return tuple(value)
    if kind == "opt_str":
        if value is None or isinstance(value, str):
            return value
        raise bad()
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise bad()
    if kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise bad()
    if kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise bad()
    if kind is dict:
        if isinstance(value, dict):
            return dict(value)
        raise bad()
    if isinstance(value, kind):
        return value
    raise bad()


def _validate(cfg: RunConfig) -> None:
    for f in fields(cfg):
        object.__setattr__(cfg, f.name, _coerce(f.name, getattr(cfg, f.name), _TYPES[f.name]))
    checks = [
        (cfg.algorithm in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}"),
        (cfg.policy in POLICY_KINDS, f"policy must be one of {POLICY_KINDS}"),
        (cfg.optimizer in OPTIMIZERS, f"optimizer must be one of {OPTIMIZERS}"),
        (cfg.activation in ACTIVATIONS, f"activation must be one of {ACTIVATIONS}"),
        (cfg.cost_surrogate in COST_SURROGATES, f"cost_surrogate must be one of {COST_SURROGATES}"),
        (len(cfg.seeds) > 0 and len(set(cfg.seeds)) == len(cfg.seeds), "seeds must be a non-empty list of distinct ints"),
        (cfg.episodes >= 1, "episodes must be >= 1"),
        (cfg.batch_episodes >= 1, "batch_episodes must be >= 1"),
        (cfg.lr > 0, "lr must be positive"),
        (0 < cfg.epsilon_clip < 1, "epsilon_clip must lie in (0, 1)"),
        (0 < cfg.beta <= cfg.beta_max, "need 0 < beta <= beta_max"),
        (cfg.update_factor > 1, "update_factor must exceed 1"),
        (cfg.lambda_init >= 0, "lambda_init must be non-negative"),
        (cfg.n_inner >= 1, "n_inner must be >= 1"),
        (cfg.critic_epochs >= 0, "critic_epochs must be >= 0"),
        (cfg.critic_lr > 0, "critic_lr must be positive"),
        (len(cfg.hidden_sizes) >= 1 and all(n > 0 for n in cfg.hidden_sizes), "hidden_sizes must be positive"),
        (cfg.lagrange_lr > 0, "lagrange_lr must be positive"),
        (cfg.kappa >= 0 and math.isfinite(cfg.kappa), "kappa must be finite and non-negative"),
        (cfg.constraints is None or all(i >= 1 for i in cfg.constraints), "constraint indices are 1-based"),
        (cfg.grid_resolution >= 1, "grid_resolution must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ValueError(msg)


def _key_lines(text: str) -> dict:
    node = yaml.compose(text)
    if node is None:
        return {}
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", line=node.start_mark.line + 1)
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        lines = _key_lines(text)
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source,
                          mark.line + 1 if mark else None) from None
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[1], source, exc.line) from None
    known = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", source, lines.get(key))
    kwargs = {}
    for key, value in data.items():
        try:
            kwargs[key] = _coerce(key, value, _TYPES[key])
        except ValueError as exc:
            raise ConfigError(str(exc), source, lines.get(key)) from None
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        line = next((lines[k] for k in sorted(data, key=len, reverse=True) if k in msg), None)
        raise ConfigError(msg, source, line) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
