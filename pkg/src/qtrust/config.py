"""Experiment configuration: strict JSON -> nested dataclasses.

Unknown keys and wrongly typed values are rejected; ``to_dict`` returns the
fully resolved configuration including every default.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

EXPERIMENTS = ("train", "uq", "shots-study", "attack", "defend", "federated", "report")


class ConfigError(ValueError):
    pass


@dataclass
class DataBlock:
    n_samples: int = 1500
    noise_std: float = 0.2
    train_fraction: float = 0.6


@dataclass
class SpsaBlock:
    a: float = 0.5
    c: float = 0.1
    A: float = 5.0
    alpha: float = 0.602
    gamma: float = 0.101


@dataclass
class TrainBlock:
    iterations: int = 50
    init_std: float = 0.1
    eval_shots: int = 200
    spsa: SpsaBlock = field(default_factory=SpsaBlock)


@dataclass
class UqBlock:
    ensemble_size: int = 5
    ensemble_mode: str = "trained"
    shots: int = 200
    prior: float = 1.0
    ci_level: float = 0.95
    ci_draws: int = 10000
    n_bins: int = 10
    link_scale: float = 3.0


@dataclass
class ShotsStudyBlock:
    shot_counts: list[int] = field(default_factory=lambda: [10, 50, 100, 200, 500, 1000])
    repeats: int = 10
    variance_repetitions: int = 1000
    variance_probability: float = 0.5
    highlight: int = 10


@dataclass
class AttackBlock:
    attacks: list[str] = field(default_factory=lambda: ["fgsm", "pgd", "quantum_state"])
    epsilons: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5])
    pgd_steps: int = 10
    example_epsilon: float = 0.2
    vulnerability_epsilon: float = 0.2
    top_k: int = 5


@dataclass
class DefendBlock:
    train_epsilon: float = 0.15
    eval_epsilons: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5])
    robust_epsilon: float = 0.2
    transfer_epsilon: float = 0.2


@dataclass
class FederatedBlock:
    n_clients: int = 4
    rounds: int = 20
    local_iterations: int = 3
    partitions: list[str] = field(default_factory=lambda: ["iid", "label_skew", "quantity_skew"])
    label_skew_beta: float = 0.5
    quantity_skew_alpha: float = 0.5
    dp_epsilons: list[float] = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
    delta: float = 1e-5
    clip_norm: float = 1.0
    mia_shadows: int = 4
    mia_max_samples: int = 1000
    aux_samples: int = 1000


@dataclass
class ReportBlock:
    inputs: list[str] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replicates: int = 1
    data: DataBlock = field(default_factory=DataBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    uq: UqBlock = field(default_factory=UqBlock)
    shots_study: ShotsStudyBlock = field(default_factory=ShotsStudyBlock)
    attack: AttackBlock = field(default_factory=AttackBlock)
    defend: DefendBlock = field(default_factory=DefendBlock)
    federated: FederatedBlock = field(default_factory=FederatedBlock)
    report: ReportBlock = field(default_factory=ReportBlock)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_scalar(value, tp, where: str):
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def _convert(value, tp, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin in (list,):
        (item_tp,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return [_convert(v, item_tp, f"{where}[{i}]") for i, v in enumerate(value)]
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(value, args[0], where)
    return _check_scalar(value, tp, where)


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in raw:
            key = f"{where}.{f.name}" if where else f.name
            kwargs[f.name] = _convert(raw[f.name], hints[f.name], key)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{where or 'config'}: missing required key {f.name!r}")
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if not 0 < cfg.data.train_fraction < 1:
        raise ConfigError("data.train_fraction must be in (0, 1)")
    if cfg.data.n_samples < 4:
        raise ConfigError("data.n_samples too small")
    if cfg.train.iterations < 1 or cfg.train.eval_shots < 1:
        raise ConfigError("train.iterations and train.eval_shots must be >= 1")
    if cfg.uq.ensemble_mode not in ("trained", "init"):
        raise ConfigError("uq.ensemble_mode must be 'trained' or 'init'")
    if cfg.uq.ensemble_size < 1 or cfg.uq.shots < 1:
        raise ConfigError("uq.ensemble_size and uq.shots must be >= 1")
    bad = set(cfg.attack.attacks) - {"fgsm", "pgd", "quantum_state"}
    if bad:
        raise ConfigError(f"attack.attacks: unknown attack(s) {sorted(bad)}")
    if any(e < 0 for e in cfg.attack.epsilons + cfg.defend.eval_epsilons):
        raise ConfigError("epsilons must be non-negative")
    bad = set(cfg.federated.partitions) - {"iid", "label_skew", "quantity_skew"}
    if bad:
        raise ConfigError(f"federated.partitions: unknown scheme(s) {sorted(bad)}")
    if any(e <= 0 for e in cfg.federated.dp_epsilons):
        raise ConfigError("federated.dp_epsilons must be positive")
    if cfg.experiment == "report" and not cfg.report.inputs:
        raise ConfigError("report.inputs must list at least one run directory")


def from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    if "shots-study" in raw and "shots_study" not in raw:
        raw["shots_study"] = raw.pop("shots-study")
    cfg = _build(ExperimentConfig, raw, "")
    _validate(cfg)
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(raw)
