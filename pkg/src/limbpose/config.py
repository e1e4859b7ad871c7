"""YAML pipeline configuration with defaults for every knob.

A config file only states the values it wants to change; everything else
keeps its default. Unknown keys are rejected rather than ignored, so typos
fail loudly. The top-level seed feeds training, scene generation, and
splitting unless those sections override it explicitly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .decoding import DecoderConfig
from .errors import DataFormatError
from .synthdata import SceneParams
from .training import TrainConfig

CONFIG_SCHEMA_VERSION = 1


@dataclass
class PathsConfig:
    dataset: str = "data"
    checkpoints: str = "checkpoints"
    outputs: str = "outputs"


@dataclass
class NetsConfig:
    """Width knobs. 64 is the full-size architecture; smaller even values
    give proportionally thinner variants for tests and ablations."""

    detection_base_width: int = 64
    regression_base_width: int = 64
    skip_connections: bool = False


@dataclass
class PipelineConfig:
    seed: int = 0
    patients: int = 4
    frames_per_patient: int = 540
    paths: PathsConfig = field(default_factory=PathsConfig)
    nets: NetsConfig = field(default_factory=NetsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    scene: SceneParams = field(default_factory=SceneParams)

    def validate_consistency(self) -> None:
        if (self.scene.width, self.scene.height) != (self.train.width, self.train.height):
            raise DataFormatError(
                f"scene resolution {self.scene.width}x{self.scene.height} does not match "
                f"training resolution {self.train.width}x{self.train.height}"
            )
        if self.patients < 1 or self.frames_per_patient < 1:
            raise DataFormatError("patients and frames_per_patient must be positive")


def apply_seed(config: PipelineConfig, seed: int) -> PipelineConfig:
    """Propagate one seed to every seeded component."""
    config.seed = seed
    config.train.seed = seed
    config.scene = dataclasses.replace(config.scene, seed=seed)
    return config


_SECTION_TYPES = {
    "paths": PathsConfig,
    "nets": NetsConfig,
    "train": TrainConfig,
    "decoder": DecoderConfig,
    "scene": SceneParams,
}

_SCALARS = {"seed": int, "patients": int, "frames_per_patient": int}


def _coerce_field(cls, name: str, value):
    hints = {f.name: f for f in dataclasses.fields(cls)}
    if name not in hints:
        raise DataFormatError(f"unknown key {name!r} in {cls.__name__}")
    if isinstance(value, list):
        return tuple(value)
    return value


def _build_section(cls, data: dict, current=None):
    if not isinstance(data, dict):
        raise DataFormatError(f"section for {cls.__name__} must be a mapping")
    base = dataclasses.asdict(current) if current is not None else {}
    for key, value in data.items():
        base[key] = _coerce_field(cls, key, value)
    try:
        return cls(**base)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid {cls.__name__}: {exc}") from exc


def default_config() -> PipelineConfig:
    return PipelineConfig()


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise DataFormatError("config root must be a mapping")
    data = dict(data)
    version = data.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise DataFormatError(f"config schema_version {version!r} unsupported")
    config = PipelineConfig()
    explicit_seed = "seed" in data
    for key, value in data.items():
        if key in _SCALARS:
            setattr(config, key, _SCALARS[key](value))
        elif key in _SECTION_TYPES:
            current = getattr(config, key)
            setattr(config, key, _build_section(_SECTION_TYPES[key], value, current))
        else:
            raise DataFormatError(f"unknown config key {key!r}")
    if explicit_seed:
        # Sections that stated their own seed keep it.
        train_seeded = isinstance(data.get("train"), dict) and "seed" in data["train"]
        scene_seeded = isinstance(data.get("scene"), dict) and "seed" in data["scene"]
        if not train_seeded:
            config.train.seed = config.seed
        if not scene_seeded:
            config.scene = dataclasses.replace(config.scene, seed=config.seed)
    config.validate_consistency()
    return config


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Load a YAML config file, or the defaults when no path is given."""
    if path is None:
        return default_config()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DataFormatError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data)


def config_to_yaml(config: PipelineConfig) -> str:
    payload = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "seed": config.seed,
        "patients": config.patients,
        "frames_per_patient": config.frames_per_patient,
        "paths": dataclasses.asdict(config.paths),
        "nets": dataclasses.asdict(config.nets),
        "train": dataclasses.asdict(config.train),
        "decoder": dataclasses.asdict(config.decoder),
        "scene": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in dataclasses.asdict(config.scene).items()
        },
    }
    return yaml.safe_dump(payload, sort_keys=True)
