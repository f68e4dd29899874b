"""Dataset scanning, pair construction and seeded augmentation.

Expected on-disk layout (DAVIS convention)::

    <root>/JPEGImages/<clip>/00000.jpg ...
    <root>/Annotations/<clip>/00000.png ...   (foreground = 255, partial coverage ok)
    <root>/ImageSets/<split>.txt              (one clip id per line)

Still-image datasets are described by a two-column manifest:
``image_path<TAB>mask_path`` per line.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .config import AugmentConfig
from .errors import ConfigError, DatasetError

# Channel statistics of the backbone's pretraining corpus, applied at load time.
CHANNEL_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
CHANNEL_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

MASK_FOREGROUND = 255
REDRAW_LIMIT = 10  # attempts before a degenerate crop falls back to full-image resize


@dataclass
class ClipDescriptor:
    """One video clip: ordered frame files plus the partially-annotated mask files."""

    clip_id: str
    frame_paths: list[Path]
    annotation_paths: dict[int, Path]
    fps: float = 30.0

    def __len__(self) -> int:
        return len(self.frame_paths)

    @property
    def annotated_indices(self) -> list[int]:
        return sorted(self.annotation_paths)


@dataclass
class SamplePair:
    """A (reference frame, target frame) unit with optional binary masks."""

    reference_image: np.ndarray  # H x W x 3 float32, channel-normalized
    target_image: np.ndarray
    reference_mask: np.ndarray | None  # H x W uint8 in {0, 1}
    target_mask: np.ndarray | None
    clip_id: str
    target_index: int


def scan_dataset(root_path: str | Path, split: str) -> list[ClipDescriptor]:
    """Enumerate the clips listed in ImageSets/<split>.txt, ordered by clip id."""
    root = Path(root_path)
    split_file = root / "ImageSets" / f"{split}.txt"
    if not split_file.is_file():
        raise ConfigError(f"split file not found: {split_file}")
    clip_ids = [line.strip() for line in split_file.read_text().splitlines() if line.strip()]

    clips = []
    for clip_id in sorted(clip_ids):
        frame_dir = root / "JPEGImages" / clip_id
        frames = sorted(frame_dir.glob("*.jpg"))
        if not frames:
            raise DatasetError(f"clip '{clip_id}' has no frames under {frame_dir}")
        index_of = {p.stem: i for i, p in enumerate(frames)}
        annotations: dict[int, Path] = {}
        for mask_path in sorted((root / "Annotations" / clip_id).glob("*.png")):
            if mask_path.stem not in index_of:
                raise DatasetError(
                    f"clip '{clip_id}': annotation {mask_path.name} has no matching frame"
                )
            annotations[index_of[mask_path.stem]] = mask_path
        clips.append(ClipDescriptor(clip_id=clip_id, frame_paths=frames, annotation_paths=annotations))
    return clips


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as channel-normalized float32 RGB."""
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise OSError(f"cannot read image: {path}")
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0
    return (rgb - CHANNEL_MEAN) / CHANNEL_STD


def denormalize(image: np.ndarray) -> np.ndarray:
    """Invert load_image's normalization back to uint8 RGB (for visualization)."""
    rgb = image * CHANNEL_STD + CHANNEL_MEAN
    return np.clip(rgb * 255.0, 0, 255).astype(np.uint8)


def binarize_mask(raster: np.ndarray) -> np.ndarray:
    """Threshold a grayscale raster in [0, 255]: value >= 128 -> 1, else 0."""
    return (np.asarray(raster) >= 128).astype(np.uint8)


def load_mask(path: str | Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise OSError(f"cannot read mask: {path}")
    return binarize_mask(raw)


def make_pair(clip: ClipDescriptor, target_index: int) -> SamplePair:
    """Build the (frame 0, target frame) pair, attaching masks where annotated."""
    if not 0 <= target_index < len(clip):
        raise ValueError(f"target_index {target_index} out of range for clip '{clip.clip_id}' "
                         f"({len(clip)} frames)")
    reference_image = load_image(clip.frame_paths[0])
    target_image = reference_image.copy() if target_index == 0 else load_image(clip.frame_paths[target_index])
    reference_mask = load_mask(clip.annotation_paths[0]) if 0 in clip.annotation_paths else None
    target_mask = (
        load_mask(clip.annotation_paths[target_index]) if target_index in clip.annotation_paths else None
    )
    return SamplePair(
        reference_image=reference_image,
        target_image=target_image,
        reference_mask=reference_mask,
        target_mask=target_mask,
        clip_id=clip.clip_id,
        target_index=target_index,
    )


def _draw_crop(rng: np.random.Generator, shape: tuple[int, int], cfg: AugmentConfig,
               mask: np.ndarray | None) -> tuple[int, int, int, int]:
    """Pick a crop window; redraw when it misses the foreground entirely."""
    height, width = shape
    for _ in range(REDRAW_LIMIT):
        scale = rng.uniform(cfg.crop_scale_range[0], cfg.crop_scale_range[1])
        crop_h = max(1, round(height * scale))
        crop_w = max(1, round(width * scale))
        top = int(rng.integers(0, height - crop_h + 1))
        left = int(rng.integers(0, width - crop_w + 1))
        if mask is None or mask.sum() == 0 or mask[top:top + crop_h, left:left + crop_w].any():
            return top, left, crop_h, crop_w
    return 0, 0, height, width


def _transform(image: np.ndarray, mask: np.ndarray | None, crop: tuple[int, int, int, int],
               flip: bool, out_size: int) -> tuple[np.ndarray, np.ndarray | None]:
    top, left, crop_h, crop_w = crop
    image = image[top:top + crop_h, left:left + crop_w]
    if flip:
        image = image[:, ::-1]
    image = cv2.resize(np.ascontiguousarray(image), (out_size, out_size), interpolation=cv2.INTER_LINEAR)
    if mask is not None:
        mask = mask[top:top + crop_h, left:left + crop_w]
        if flip:
            mask = mask[:, ::-1]
        mask = cv2.resize(np.ascontiguousarray(mask), (out_size, out_size), interpolation=cv2.INTER_NEAREST)
    return image, mask


def augment_pair(pair: SamplePair, cfg: AugmentConfig) -> SamplePair:
    """Crop/flip/resize both frames; each frame shares its transform with its own mask.

    Reference and target draw independent transforms from one generator seeded
    by cfg.seed, so the same (pair, cfg) always produces bit-identical output.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    out = {}
    for name, image, mask in (
        ("reference", pair.reference_image, pair.reference_mask),
        ("target", pair.target_image, pair.target_mask),
    ):
        crop = _draw_crop(rng, image.shape[:2], cfg, mask)
        flip = bool(rng.random() < cfg.hflip_probability)
        out[name] = _transform(image, mask, crop, flip, cfg.output_size)
    return replace(
        pair,
        reference_image=out["reference"][0],
        reference_mask=out["reference"][1],
        target_image=out["target"][0],
        target_mask=out["target"][1],
    )


def image_as_pretrain_sample(image_path: str | Path, mask_path: str | Path,
                             cfg: AugmentConfig) -> SamplePair:
    """Turn one still image into a pair of independently augmented views of itself."""
    image = load_image(image_path)
    mask = load_mask(mask_path)
    if mask.shape != image.shape[:2]:
        raise DatasetError(
            f"mask {mask_path} has shape {mask.shape}, image {image_path} is {image.shape[:2]}"
        )
    pair = SamplePair(
        reference_image=image,
        target_image=image.copy(),
        reference_mask=mask,
        target_mask=mask.copy(),
        clip_id=Path(image_path).stem,
        target_index=0,
    )
    return augment_pair(pair, cfg)


def read_image_manifest(path: str | Path) -> list[tuple[Path, Path]]:
    """Parse a two-column image/mask manifest into path pairs."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"image manifest not found: {path}")
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected image_path<TAB>mask_path")
        entries.append((Path(parts[0]), Path(parts[1])))
    return entries


def sample_seed(global_seed: int, clip_id: str, target_index: int, epoch: int) -> int:
    """Derive a per-sample augmentation seed so parallel loading stays reproducible."""
    mix = np.random.SeedSequence(
        [global_seed, epoch, target_index, zlib.crc32(clip_id.encode("utf-8"))]
    )
    return int(mix.generate_state(1)[0])
