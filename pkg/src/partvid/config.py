"""Configuration objects and the key=value override mechanism used by the CLI."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DEFAULT_LOSS_WEIGHTS = {
    "seg_final": 1.0,
    "seg_aux": 0.4,
    "saliency": 1.0,
    "part_total": 0.5,
}


@dataclass
class AugmentConfig:
    """Geometric augmentation: random crop, horizontal flip, square resize."""

    crop_scale_range: tuple[float, float] = (1.0, 1.0)
    hflip_probability: float = 0.0
    output_size: int = 480
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.crop_scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"crop_scale_range must lie in (0, 1], got {self.crop_scale_range}")
        if not (0.0 <= self.hflip_probability <= 1.0):
            raise ConfigError(f"hflip_probability must lie in [0, 1], got {self.hflip_probability}")
        if self.output_size <= 0:
            raise ConfigError(f"output_size must be positive, got {self.output_size}")


@dataclass
class GlcmConfig:
    """Co-occurrence entropy parameters, recorded in every complexity report."""

    levels: int = 32
    offsets: tuple[tuple[int, int], ...] = ((1, 0), (0, 1), (1, 1), (1, -1))
    resize_short: int | None = 480  # evaluate frames at 480p luminance; None keeps native size


@dataclass
class TrainConfig:
    """Full training/inference configuration. Keys mirror the CLI config file schema."""

    # data locations
    dataset_root: str = ""
    image_manifest: str = ""  # optional two-column TSV: image_path<TAB>mask_path

    # optimization
    epochs: int = 60
    batch_size: int = 4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_image_max: float = 2.5e-4
    lr_video_backbone_max: float = 2.5e-5
    lr_video_rest_max: float = 2.5e-3
    image_iters: int = 1  # alternation: this many image batches ...
    video_iters: int = 2  # ... before this many video batches, repeating
    total_video_iters: int = 0  # 0 = epochs * batches-per-epoch; >0 caps the run

    # model
    parts_p: int = 5
    input_size: int = 480
    backbone: str = "resnet50"
    backbone_pretrained: bool = False
    fpn_channels: int = 256
    compressed_channels: int = 128
    use_part_attention: bool = True  # False drops the part-attention and fusion stages
    part_terms: tuple[str, ...] = ("geo", "sem", "area")
    semantic_extractor: str = "resnet18"
    semantic_pretrained: bool = False

    # losses
    loss_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LOSS_WEIGHTS))

    # augmentation
    crop_scale_range: tuple[float, float] = (0.6, 1.0)
    hflip_probability: float = 0.5

    # bookkeeping
    seed: int = 0
    eval_every: int = 0  # epochs  between test-split evaluations; 0 disables
    checkpoint_every: int = 1  # epochs between checkpoint writes

    def validate(self) -> None:
        for name in ("lr_image_max", "lr_video_backbone_max", "lr_video_rest_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.image_iters < 0 or self.video_iters < 0:
            raise ConfigError("alternation counts must be >= 0")
        if self.parts_p < 1:
            raise ConfigError("parts_p must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.input_size <= 0:
            raise ConfigError("input_size must be > 0")
        for name, value in self.loss_weights.items():
            if name not in DEFAULT_LOSS_WEIGHTS:
                raise ConfigError(f"unknown loss weight '{name}'")
            if value < 0:
                raise ConfigError(f"loss weight '{name}' must be >= 0, got {value}")
        unknown_terms = set(self.part_terms) - {"geo", "sem", "area"}
        if unknown_terms:
            raise ConfigError(f"unknown part loss terms: {sorted(unknown_terms)}")

    def augment(self) -> AugmentConfig:
        cfg = AugmentConfig(
            crop_scale_range=tuple(self.crop_scale_range),
            hflip_probability=self.hflip_probability,
            output_size=self.input_size,
            seed=self.seed,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["crop_scale_range"] = list(self.crop_scale_range)
        out["part_terms"] = list(self.part_terms)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key '{key}'")
            if key in ("crop_scale_range", "part_terms"):
                value = tuple(value)
            kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_config(path: str | Path) -> TrainConfig:
    """Read a JSON config file into a TrainConfig."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return TrainConfig.from_dict(data)


def parse_override(text: str) -> tuple[str, object]:
    """Parse one 'key=value' override; value is JSON when possible, else a string."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override '{text}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(cfg: TrainConfig, overrides: list[str]) -> TrainConfig:
    """Return a new TrainConfig with each key=value override applied."""
    data = cfg.to_dict()
    for item in overrides:
        key, value = parse_override(item)
        if key not in data:
            raise ConfigError(f"unknown config key '{key}' in override '{item}'")
        data[key] = value
    return TrainConfig.from_dict(data)
