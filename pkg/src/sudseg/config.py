"""Flat key=value experiment configuration.

Every knob lives in a frozen dataclass section; keys are dotted paths like
``train.mode`` or ``net.levels``. Parsing and formatting round-trip
losslessly: floats are emitted with repr, tuples comma-joined, bools as
true/false. Unknown keys are errors, missing keys take defaults.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .nets import NetConfig
from .synth import ShapeSceneConfig

SUPERVISION_MODES = (
    "supervised-only",
    "red",
    "pi-model",
    "temporal-ensembling",
    "mean-teacher",
    "sud-stored",
    "sud-teacher",
)
TARGET_STEPS = ("convex-blend", "projected-descent", "exponential-descent")
SUP_LOSSES = ("cross-entropy", "dice")
UNSUP_LOSSES = ("same", "mse", "cross-entropy", "dice")
DENOISER_KINDS = ("identity", "gaussian", "learned")

# train.preset="strong" switches to the heavier regularization pairing
PRESETS = {"": {}, "strong": {"train.beta": "0.125", "train.lambda_max": "8.0"}}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    dir: str = "data"
    labeled: int = 1
    unlabeled: int = 100
    val: int = 10
    test: int = 50
    denoiser: int = 20
    seed: int = 7

    def validate(self):
        for f in dataclasses.fields(self):
            if f.type == "int" and getattr(self, f.name) < 0:
                raise ConfigError(f"data.{f.name} must be >= 0")


@dataclass(frozen=True)
class TrainSection:
    mode: str = "sud-stored"
    preset: str = ""
    steps: int = 2000
    lambda_max: float = 4.0
    beta: float = 0.05
    alpha_curve: str = "linear-down"
    alpha_value: float = 1.0
    lambda_curve: str = "linear-up"
    lambda_value: float = 0.0
    sup_loss: str = "cross-entropy"
    unsup_loss: str = "same"
    target_step: str = "convex-blend"
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    precision: str = "float64"
    seed: int = 0
    val_every: int = 1
    checkpoint_every: int = 0
    two_pass_updates: bool = False
    denoiser_kind: str = "gaussian"
    denoiser_width: float = 1.0
    denoiser_path: str = ""

    def validate(self):
        if self.mode not in SUPERVISION_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.target_step not in TARGET_STEPS:
            raise ConfigError(f"unknown target_step {self.target_step!r}")
        if self.sup_loss not in SUP_LOSSES:
            raise ConfigError(f"unknown sup_loss {self.sup_loss!r}")
        if self.unsup_loss not in UNSUP_LOSSES:
            raise ConfigError(f"unknown unsup_loss {self.unsup_loss!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown precision {self.precision!r}")
        if self.denoiser_kind not in DENOISER_KINDS:
            raise ConfigError(f"unknown denoiser_kind {self.denoiser_kind!r}")
        if self.steps < 0:
            raise ConfigError("train.steps must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("train.beta must be in [0, 1]")
        if self.lambda_max < 0:
            raise ConfigError("train.lambda_max must be >= 0")
        if self.val_every < 1:
            raise ConfigError("train.val_every must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("train.checkpoint_every must be >= 0")
        if self.seed < 0:
            raise ConfigError("train.seed must be >= 0")


@dataclass(frozen=True)
class AugmentSection:
    flip_p: float = 1.0
    elastic_p: float = 0.15
    elastic_grid: int = 16
    elastic_shift: float = 4.0
    intensity_scale_p: float = 0.15
    intensity_lo: float = 0.75
    intensity_hi: float = 1.25
    noise_p: float = 0.1
    noise_hi: float = 0.1

    def validate(self):
        for name in ("flip_p", "elastic_p", "intensity_scale_p", "noise_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"augment.{name} must be in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    run_dir: str = "runs/run0"
    data: DataSection = field(default_factory=DataSection)
    scene: ShapeSceneConfig = field(default_factory=ShapeSceneConfig)
    net: NetConfig = field(default_factory=lambda: NetConfig(n_classes=4))
    denoiser_net: NetConfig = field(
        default_factory=lambda: NetConfig(
            levels=3, base_features=8, in_channels=4, n_classes=4, skip_connections=False
        )
    )
    train: TrainSection = field(default_factory=TrainSection)
    augment: AugmentSection = field(default_factory=AugmentSection)

    def validate(self):
        self.data.validate()
        self.scene.validate()
        self.net.validate()
        self.denoiser_net.validate()
        self.train.validate()
        self.augment.validate()
        if self.net.in_channels != 1:
            raise ConfigError("reconstructor must take a single intensity channel")
        if self.net.n_classes != self.scene.n_classes:
            raise ConfigError(
                f"net.n_classes={self.net.n_classes} != scene.n_classes={self.scene.n_classes}"
            )


# -- flat key=value parsing ---------------------------------------------------


def _sections(cls=ExperimentConfig):
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        yield f.name, hints[f.name]


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format_value(e) for e in v)
    return str(v)


def _parse_value(text: str, tp, key: str):
    text = text.strip()
    origin = typing.get_origin(tp)
    if origin is tuple:
        args = typing.get_args(tp)
        parts = [p for p in text.split(",") if p != ""]
        if len(args) == 2 and args[1] is Ellipsis:
            elem_types = [args[0]] * len(parts)
        else:
            if len(parts) != len(args):
                raise ConfigError(f"{key}: expected {len(args)} comma-separated values")
            elem_types = list(args)
        return tuple(_parse_value(p, et, key) for p, et in zip(parts, elem_types))
    if tp is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if tp is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if tp is float:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if tp is str:
        return text
    raise ConfigError(f"{key}: unsupported field type {tp}")


def to_flat(cfg: ExperimentConfig) -> "dict[str, str]":
    out = {}
    hints = typing.get_type_hints(type(cfg))
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(hints[f.name]):
            for sf in dataclasses.fields(v):
                out[f"{f.name}.{sf.name}"] = _format_value(getattr(v, sf.name))
        else:
            out[f.name] = _format_value(v)
    return out


def from_flat(pairs: "dict[str, str]") -> ExperimentConfig:
    """Build a config from dotted key=value pairs. train.preset expands first,
    then explicit keys override it; unknown keys are errors."""
    expanded = dict(PRESETS.get(pairs.get("train.preset", ""), None) or {})
    if pairs.get("train.preset", "") not in PRESETS:
        raise ConfigError(f"unknown preset {pairs['train.preset']!r}")
    expanded.update(pairs)

    section_types = dict(_sections())
    defaults = ExperimentConfig()
    kwargs = {}
    claimed = set()
    for name, tp in section_types.items():
        if not dataclasses.is_dataclass(tp):
            continue
        hints = typing.get_type_hints(tp)
        sub = {}
        for sf in dataclasses.fields(tp):
            key = f"{name}.{sf.name}"
            claimed.add(key)
            if key in expanded:
                sub[sf.name] = _parse_value(expanded[key], hints[sf.name], key)
        kwargs[name] = dataclasses.replace(getattr(defaults, name), **sub)
    for name, tp in section_types.items():
        if dataclasses.is_dataclass(tp):
            continue
        claimed.add(name)
        if name in expanded:
            kwargs[name] = _parse_value(expanded[name], tp, name)
    unknown = sorted(set(expanded) - claimed)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def parse_overrides(items) -> "dict[str, str]":
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config_file(path) -> "dict[str, str]":
    pairs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def write_config_file(path, cfg: ExperimentConfig) -> None:
    lines = [f"{k} = {v}" for k, v in to_flat(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path=None, overrides=()) -> ExperimentConfig:
    pairs = read_config_file(path) if path else {}
    pairs.update(parse_overrides(overrides))
    return from_flat(pairs)
