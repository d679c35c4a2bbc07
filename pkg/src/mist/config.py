"""Experiment configuration: dataclass tree with INI-file round trip.

Precedence is command-line overrides > config file > defaults; every key has
a default, and an empty file runs the grid-layout digit reconstruction
recipe.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .heatmap import ScaleSpaceSpec


@dataclass
class DataConfig:
    dataset: str = "mnist_easy"  # mnist_easy | mnist_hard | gabor | svhn
    root: str = "data"
    canvas: int = 96
    grid: int = 3
    jitter_sigma: float = -1.0  # < 0: default of cell/8
    count_min: int = 9
    count_max: int = 9
    min_separation: float = 28.0
    train_size: int = 5000
    test_size: int = 1000
    digits_per_class: int = 600
    digit_test_per_class: int = 100
    impulses: int = 16
    gabor_envelope: float = 4.0
    gabor_frequency: float = 0.1
    gabor_orientation: float = math.pi / 4
    gabor_support: int = 21
    svhn_dir: str = ""


@dataclass
class ScalesConfig:
    S: int = 3
    sigma_min: float = 1.0
    ratio: float = 2.0

    def to_spec(self) -> ScaleSpaceSpec:
        return ScaleSpaceSpec(levels=self.S, sigma_min=self.sigma_min, ratio=self.ratio)


@dataclass
class HeatmapConfig:
    window: int = 15
    nms_window: int = 15
    channels: int = 32
    blocks: int = 4


@dataclass
class TaskConfig:
    base_channels: int = 32
    bottleneck: int = 128
    base_window: float = 32.0


@dataclass
class TrainConfig:
    k: int = 9
    penalty_weight: float = 1.0  # lambda of the lifted objective
    penalty_weight_x: float = 1.0
    penalty_weight_y: float = 1.0
    penalty_weight_c: float = 1.0
    batch_size: int = 8
    iterations: int = 3000
    lr_heatmap: float = 1e-4
    lr_task: float = 1e-4
    lr_slack: float = 0.1  # pixels per inner step
    slack_steps: int = 1
    slack_c_lr_scale: float = 0.25  # level units move slower than pixels
    optimizer: str = "adam"  # adam | sgd
    share_task_forward: bool = False
    allow_empty_scenes: bool = False
    log_every: int = 10
    eval_every: int = 500
    eval_subset: int = 32
    checkpoint_every: int = 500


@dataclass
class BaselineConfig:
    kind: str = "none"  # none | grid | channelwise
    temperature: float = 1.0


@dataclass
class EvalConfig:
    iou_thresholds: str = "0.0,0.5,0.6,0.7,0.8,0.9"
    matching: str = "greedy"  # greedy | optimal

    def thresholds(self) -> list[float]:
        return [float(t) for t in self.iou_thresholds.split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    task: str = "reconstruct"  # reconstruct | classify
    model: str = "mist"  # mist | grid | channelwise
    seed: int = 0
    output_dir: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    scales: ScalesConfig = field(default_factory=ScalesConfig)
    heatmap: HeatmapConfig = field(default_factory=HeatmapConfig)
    taskhead: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def effective_model(self) -> str:
        return self.baseline.kind if self.baseline.kind != "none" else self.model

    def validate(self) -> None:
        if self.task not in ("reconstruct", "classify"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.effective_model not in ("mist", "grid", "channelwise"):
            raise ValueError(f"unknown model {self.effective_model!r}")
        if self.data.dataset not in ("mnist_easy", "mnist_hard", "gabor", "svhn"):
            raise ValueError(f"unknown dataset {self.data.dataset!r}")
        if self.train.k < 1 or self.train.slack_steps < 1:
            raise ValueError("k and slack_steps must be >= 1")
        if self.train.penalty_weight < 0:
            raise ValueError("penalty weight must be >= 0")


_SECTIONS = {
    "experiment": None,  # top-level scalars
    "data": "data",
    "scales": "scales",
    "heatmap": "heatmap",
    "task": "taskhead",
    "train": "train",
    "baseline": "baseline",
    "eval": "eval",
}


def _coerce(value: str, target_type: type):
    if target_type is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return target_type(value)


def _apply_section(obj, section: configparser.SectionProxy) -> None:
    by_name = {f.name: f for f in fields(obj)}
    for key, value in section.items():
        if key not in by_name:
            raise KeyError(f"unknown config key {section.name}.{key}")
        f = by_name[key]
        setattr(obj, key, _coerce(value, type(getattr(obj, key))))


def load_config(path: Path | str | None = None) -> ExperimentConfig:
    """Parse an INI config; a missing or empty file yields pure defaults."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    parser.optionxform = str  # preserve key case (scales.S)
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    for section_name in parser.sections():
        if section_name not in _SECTIONS:
            raise KeyError(f"unknown config section [{section_name}]")
        attr = _SECTIONS[section_name]
        target = cfg if attr is None else getattr(cfg, attr)
        _apply_section(target, parser[section_name])
    cfg.validate()
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` strings (flags beat the file)."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ValueError(f"override key must be section.key, got {dotted!r}")
        section_name, key = dotted.split(".", 1)
        if section_name not in _SECTIONS:
            raise KeyError(f"unknown config section {section_name!r}")
        attr = _SECTIONS[section_name]
        target = cfg if attr is None else getattr(cfg, attr)
        if not hasattr(target, key):
            raise KeyError(f"unknown config key {dotted!r}")
        setattr(target, key, _coerce(value, type(getattr(target, key))))
    cfg.validate()
    return cfg


def save_config(cfg: ExperimentConfig, path: Path | str) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section_name, attr in _SECTIONS.items():
        target = cfg if attr is None else getattr(cfg, attr)
        if attr is None:
            items = {f.name: getattr(cfg, f.name) for f in fields(cfg) if not hasattr(getattr(cfg, f.name), "__dataclass_fields__")}
        else:
            items = asdict(target)
        parser[section_name] = {k: str(v) for k, v in items.items()}
    with open(path, "w") as f:
        parser.write(f)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of everything that affects a training run."""
    blob = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
