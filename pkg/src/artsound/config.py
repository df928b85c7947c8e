"""Pipeline configuration loaded from a TOML file.

An empty file (or no file) gives the reference settings: 22.05 kHz audio,
FFT 1024 / hop 256 / 80 Mel bands / 896 frames, a 1024 -> 512 fusion block,
a 4-layer BiLSTM with 512 units, Adam at 1e-4 with batch 32 for 10 epochs,
and an 8:1:1 train/validation/test split.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .melspec import MelConfig
from .neuralnet import ModelDims, TrainConfig

CONFIG_ENV = "ARTSOUND_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSection:
    d_x: int = 1024
    d_h: int = 512
    d_r: int = 512
    d_in: int = 512
    hidden: int = 512
    layers: int = 4


@dataclass(frozen=True)
class TrainSection:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    validation_fraction: float = 0.1
    test_fraction: float = 0.1


@dataclass(frozen=True)
class PathsSection:
    art_manifest: str | None = None
    music_manifest: str | None = None
    art_embeddings: str | None = None
    music_embeddings: str | None = None
    keyword_embeddings: str | None = None
    image_embeddings: str | None = None
    text_embeddings: str | None = None
    positive_lexicon: str | None = None
    negative_lexicon: str | None = None
    stopwords: str | None = None
    mels_dir: str | None = None
    output_dir: str = "out"


@dataclass(frozen=True)
class GenerateSection:
    iterations: int = 32


@dataclass(frozen=True)
class StatsSection:
    bin_width: float = 0.1


@dataclass(frozen=True)
class PipelineConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    paths: PathsSection = field(default_factory=PathsSection)
    generate: GenerateSection = field(default_factory=GenerateSection)
    stats: StatsSection = field(default_factory=StatsSection)

    @property
    def model_dims(self) -> ModelDims:
        m = self.model
        return ModelDims(m.d_x, m.d_h, m.d_r, m.d_in, m.hidden, m.layers,
                         self.mel.target_frames, self.mel.n_mels)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(lr=t.lr, batch_size=t.batch_size, epochs=t.epochs, seed=t.seed)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, train=replace(self.train, seed=seed))


def _build(cls, section: str, values) -> object:
    if not isinstance(values, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] settings: {exc}") from None


_SECTIONS = {
    "mel": MelConfig,
    "model": ModelSection,
    "train": TrainSection,
    "paths": PathsSection,
    "generate": GenerateSection,
    "stats": StatsSection,
}


def parse_config(data: dict) -> PipelineConfig:
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    kwargs = {name: _build(cls, name, data[name]) for name, cls in _SECTIONS.items() if name in data}
    cfg = PipelineConfig(**kwargs)
    t = cfg.train
    if t.epochs < 1:
        raise ConfigError("train.epochs must be >= 1 (no epoch to select a model from)")
    if t.batch_size < 1:
        raise ConfigError("train.batch_size must be >= 1")
    if t.lr < 0:
        raise ConfigError("train.lr must be >= 0")
    if not (0 <= t.validation_fraction < 1 and 0 <= t.test_fraction < 1
            and t.validation_fraction + t.test_fraction < 1):
        raise ConfigError("validation/test fractions must be in [0, 1) and sum below 1")
    if cfg.generate.iterations < 1:
        raise ConfigError("generate.iterations must be >= 1")
    try:
        cfg.model_dims
    except ValueError as exc:
        raise ConfigError(f"invalid model dimensions: {exc}") from None
    return cfg


def load_config(path=None) -> PipelineConfig:
    """Read ``path``, else ``$ARTSOUND_CONFIG``, else return defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return parse_config(data)
