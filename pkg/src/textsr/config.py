"""Experiment configuration: sectioned key=value files with typed overrides.

The on-disk format is INI with sections [model], [loss], [train], [flags],
[data], [paths]. Every key mirrors a dataclass field below; unknown keys are
rejected rather than ignored so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .objective import LossWeights

SCALES = (4, 8, 16)
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class ModelSection:
    scale: int = 8
    image_size: int = 64
    channels: int = 64
    res_blocks: int = 2
    word_dim: int = 64
    t_max: int = 16


@dataclass
class LossSection:
    lambda_l2: float = 1.0
    lambda_cgan: float = 0.1
    lambda_tic: float = 0.5
    lambda_tar: float = 1.0
    gamma1: float = 4.0
    gamma2: float = 5.0
    gamma3: float = 10.0
    mismatch_weight: float = 0.5


@dataclass
class TrainSection:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    steps: int = 5000
    pretrain_steps: int = 3000
    seed: int = 0
    log_every: int = 50
    sample_every: int = 500
    min_count: int = 1
    distractors: int = 9


@dataclass
class FlagsSection:
    use_tam: bool = True
    use_tic: bool = True
    use_refine: bool = True
    use_tar: bool = True
    use_cgan: bool = True


@dataclass
class DataSection:
    root: str = "data"
    train: int = 2000
    val: int = 64
    test: int = 200
    seed: int = 0


@dataclass
class PathsSection:
    work_dir: str = "runs/default"


_SECTIONS = {
    "model": ModelSection,
    "loss": LossSection,
    "train": TrainSection,
    "flags": FlagsSection,
    "data": DataSection,
    "paths": PathsSection,
}


@dataclass
class TrainConfig:
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    flags: FlagsSection = field(default_factory=FlagsSection)
    data: DataSection = field(default_factory=DataSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def validate(self) -> "TrainConfig":
        m, lo, tr, fl = self.model, self.loss, self.train, self.flags
        if m.scale not in SCALES:
            raise ConfigurationError(f"model.scale must be one of {SCALES}, got {m.scale}")
        if m.image_size < 16 or m.image_size & (m.image_size - 1):
            raise ConfigurationError(
                f"model.image_size must be a power of two >= 16, got {m.image_size}"
            )
        if m.image_size % m.scale or m.image_size // m.scale < 2:
            raise ConfigurationError(
                f"model.image_size {m.image_size} incompatible with scale {m.scale}"
            )
        for name in ("channels", "res_blocks", "word_dim", "t_max"):
            if getattr(m, name) < 1:
                raise ConfigurationError(f"model.{name} must be >= 1")
        LossWeights(lo.lambda_l2, lo.lambda_cgan, lo.lambda_tic, lo.lambda_tar)
        for name in ("gamma1", "gamma2", "gamma3"):
            value = getattr(lo, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigurationError(f"loss.{name} must be finite and > 0, got {value}")
        if lo.mismatch_weight < 0:
            raise ConfigurationError("loss.mismatch_weight must be >= 0")
        if tr.lr <= 0:
            raise ConfigurationError(f"train.lr must be > 0, got {tr.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(tr, name)
            if not 0.0 <= value < 1.0:
                raise ConfigurationError(f"train.{name} must be in [0, 1), got {value}")
        if tr.eps <= 0:
            raise ConfigurationError("train.eps must be > 0")
        for name in ("batch_size", "steps", "pretrain_steps", "log_every",
                     "sample_every", "min_count", "distractors"):
            if getattr(tr, name) < 1:
                raise ConfigurationError(f"train.{name} must be >= 1")
        if fl.use_tar and not (fl.use_tam and fl.use_refine):
            raise ConfigurationError(
                "flags.use_tar requires flags.use_tam and flags.use_refine"
            )
        for name in ("train", "val", "test"):
            if getattr(self.data, name) < 1:
                raise ConfigurationError(f"data.{name} must be >= 1")
        return self

    def weights(self) -> LossWeights:
        lo = self.loss
        return LossWeights(
            l2=lo.lambda_l2,
            cgan=lo.lambda_cgan if self.flags.use_cgan else 0.0,
            tic=lo.lambda_tic if self.flags.use_tic else 0.0,
            tar=lo.lambda_tar,
        )

    def as_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    @property
    def work_dir(self) -> Path:
        return Path(self.paths.work_dir)


def _coerce(section: str, key: str, text: str, kind: type):
    text = text.strip()
    try:
        if kind is bool:
            lower = text.lower()
            if lower in _TRUE:
                return True
            if lower in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(
            f"{section}.{key} expects {kind.__name__}, got {text!r}"
        ) from None


def _field_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


_KINDS = {"int": int, "float": float, "bool": bool, "str": str}


def _kind_of(cls, name):
    annotation = _field_types(cls)[name]
    if isinstance(annotation, type):
        return annotation
    return _KINDS[annotation]


def default_config() -> TrainConfig:
    return TrainConfig()


def from_mapping(mapping: dict) -> TrainConfig:
    """Build a config from {section: {key: value-or-string}}."""
    config = TrainConfig()
    for section_name, entries in mapping.items():
        if section_name not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{section_name}]")
        section = getattr(config, section_name)
        known = _field_types(type(section))
        for key, value in entries.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {section_name}.{key}")
            kind = _kind_of(type(section), key)
            if isinstance(value, str):
                value = _coerce(section_name, key, value, kind)
            elif kind in (int, float) and isinstance(value, (int, float)):
                value = kind(value)
            elif not isinstance(value, kind):
                raise ConfigurationError(
                    f"{section_name}.{key} expects {kind.__name__}, got {value!r}"
                )
            setattr(section, key, value)
    return config


def load_config(path) -> TrainConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    mapping = {name: dict(parser[name]) for name in parser.sections()}
    return from_mapping(mapping)


def save_config(config: TrainConfig, path) -> None:
    parser = configparser.ConfigParser()
    for name in _SECTIONS:
        parser[name] = {
            key: str(value).lower() if isinstance(value, bool) else str(value)
            for key, value in dataclasses.asdict(getattr(config, name)).items()
        }
    with open(path, "w") as fh:
        parser.write(fh)


def apply_overrides(config: TrainConfig, overrides) -> TrainConfig:
    """Apply dotted section.key=value strings in place."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        dotted, _, raw = item.partition("=")
        if "." not in dotted:
            raise ConfigurationError(f"override key {dotted!r} needs a section prefix")
        section_name, _, key = dotted.strip().partition(".")
        if section_name not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{section_name}]")
        section = getattr(config, section_name)
        if key not in _field_types(type(section)):
            raise ConfigurationError(f"unknown config key {section_name}.{key}")
        kind = _kind_of(type(section), key)
        setattr(section, key, _coerce(section_name, key, raw, kind))
    return config
