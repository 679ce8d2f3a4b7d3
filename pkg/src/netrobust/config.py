"""Run configuration: one strict JSON file capturing every default.

Unknown keys are rejected, and every command writes the fully resolved
configuration next to its outputs so runs are self-describing.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .domain import ValidationError
from .netsim import SimConfig


@dataclass
class GridConfig:
    state_levels: int | list[int] = 3
    bw_levels: list[float] = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0, 40.0, 50.0])
    cpu_levels: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0])


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 64
    momentum: float = 0.9
    n_samples: int = 1000
    eval_every: int = 5
    holdout_fraction: float = 0.8
    rreg_max_points: int = 2000
    layer_dims: list[int] = field(default_factory=lambda: [8, 128, 256, 128, 1])


@dataclass
class AttackConfig:
    epsilon: float = 0.2
    budget: int = 30
    candidate_count: int = 2000
    n_states: int = 20


@dataclass
class DefenseConfig:
    kappa: float = 0.99
    subgroups: int = 8
    actions_per_state: int = 16
    epochs_per_group: int = 20
    cycles: int = 1


@dataclass
class SweepConfig:
    epsilon_values: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2])
    kappa_values: list[float] = field(default_factory=lambda: [0.9, 0.95, 0.99, 1.0])
    h_values: list[float] = field(default_factory=lambda: [100.0, 150.0, 200.0, 300.0])


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    n_workers: int = 1
    sim: SimConfig = field(default_factory=SimConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self) -> None:
        # The per-run simulator seed derives from the top-level seed.
        self.sim = dataclasses.replace(self.sim, seed=self.seed)


_SECTIONS = {
    "sim": SimConfig,
    "grid": GridConfig,
    "train": TrainConfig,
    "attack": AttackConfig,
    "defense": DefenseConfig,
    "sweep": SweepConfig,
}


def _build(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown key(s) in {path or 'config'}: {sorted(unknown)}")
    return cls(**data)


def from_dict(data: dict) -> RunConfig:
    data = dict(data)
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            section = data.pop(key)
            if not isinstance(section, dict):
                raise ValidationError(f"config section {key!r} must be an object")
            kwargs[key] = _build(cls, section, key)
    top = _build(RunConfig, {**data, **{k: v for k, v in kwargs.items()}}, "")
    return top


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh))


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def write_resolved(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
