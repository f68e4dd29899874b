"""Generator for small on-disk video corpora of moving articulated figures.

Each clip shows a rectangle torso translating across a static background while
an attached limb swings independently around its shoulder pivot, so limb and
torso have distinct motion states. Output follows the dataset layout consumed
by dataio.scan_dataset.
"""

from __future__ import annotations

import math
from pathlib import Path

import cv2
import numpy as np

JPEG_QUALITY = 95


def _background(size: tuple[int, int], rng: np.random.Generator, textured: bool) -> np.ndarray:
    h, w = size
    base = rng.uniform(30, 80, size=3)
    ramp = np.linspace(0.0, 1.0, h, dtype=np.float32).reshape(h, 1, 1)
    canvas = base.reshape(1, 1, 3) + ramp * rng.uniform(10, 40)
    if textured:
        canvas = canvas + rng.normal(0.0, 18.0, size=(h, w, 3))
    return np.clip(canvas, 0, 255).astype(np.uint8)


def _limb_polygon(pivot: tuple[float, float], length: float, width: float,
                  angle: float) -> np.ndarray:
    px, py = pivot
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    local = np.array([
        [0.0, -width / 2],
        [length, -width / 2],
        [length, width / 2],
        [0.0, width / 2],
    ])
    rotated = np.stack([
        px + local[:, 0] * cos_a - local[:, 1] * sin_a,
        py + local[:, 0] * sin_a + local[:, 1] * cos_a,
    ], axis=1)
    return np.round(rotated).astype(np.int32)


def render_figure_frame(size: tuple[int, int], background: np.ndarray,
                        torso_center: tuple[float, float], torso_size: tuple[int, int],
                        limb_angle: float, torso_color, limb_color,
                        limb_length: float, limb_width: float) -> tuple[np.ndarray, np.ndarray]:
    """Draw one frame: returns (RGB uint8 frame, binary uint8 mask)."""
    h, w = size
    frame = background.copy()
    mask = np.zeros((h, w), dtype=np.uint8)

    cx, cy = torso_center
    th, tw = torso_size
    torso = np.array([
        [cx - tw / 2, cy - th / 2],
        [cx + tw / 2, cy - th / 2],
        [cx + tw / 2, cy + th / 2],
        [cx - tw / 2, cy + th / 2],
    ]).round().astype(np.int32)
    pivot = (cx + tw / 2, cy - th / 2 + 4)  # shoulder at the torso's top-right
    limb = _limb_polygon(pivot, limb_length, limb_width, limb_angle)

    cv2.fillPoly(frame, [torso], [int(c) for c in torso_color])
    cv2.fillPoly(frame, [limb], [int(c) for c in limb_color])
    cv2.fillPoly(mask, [torso], 1)
    cv2.fillPoly(mask, [limb], 1)
    return frame, mask


def _write_frame(path: Path, frame_rgb: np.ndarray) -> None:
    bgr = cv2.cvtColor(frame_rgb, cv2.COLOR_RGB2BGR)
    cv2.imwrite(str(path), bgr, [cv2.IMWRITE_JPEG_QUALITY, JPEG_QUALITY])


def generate_clip(root: Path, clip_id: str, rng: np.random.Generator, frames: int,
                  size: tuple[int, int], annotate_every: int, textured: bool) -> None:
    h, w = size
    frame_dir = root / "JPEGImages" / clip_id
    mask_dir = root / "Annotations" / clip_id
    frame_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    background = _background(size, rng, textured)
    torso_h = int(rng.integers(h // 3, h // 2))
    torso_w = int(rng.integers(w // 5, w // 3))
    limb_length = float(rng.uniform(0.55, 0.85) * torso_h)
    limb_width = float(rng.uniform(7, 11) * h / 128)
    torso_color = rng.uniform(170, 250, size=3)
    limb_color = rng.uniform(170, 250, size=3)
    cy = rng.uniform(0.45, 0.6) * h
    x_start = rng.uniform(0.25, 0.4) * w
    x_speed = rng.uniform(0.4, 1.2) * w / 128 * rng.choice([-1.0, 1.0])
    swing_amp = rng.uniform(0.5, 1.1)
    swing_freq = rng.uniform(0.15, 0.35)
    swing_phase = rng.uniform(0, 2 * math.pi)

    for t in range(frames):
        # bounce the torso horizontally inside the frame
        travel = x_start + x_speed * t
        span = w * 0.35
        offset = abs((travel - x_start) % (2 * span) - span) - span / 2
        cx = min(max(x_start + offset, torso_w), w - torso_w - limb_length * 0.5)
        angle = -math.pi / 3 + swing_amp * math.sin(2 * math.pi * swing_freq * t + swing_phase)
        frame, mask = render_figure_frame(
            size, background, (cx, cy), (torso_h, torso_w), angle,
            torso_color, limb_color, limb_length, limb_width,
        )
        _write_frame(frame_dir / f"{t:05d}.jpg", frame)
        if t % annotate_every == 0:
            cv2.imwrite(str(mask_dir / f"{t:05d}.png"), mask * 255)


def generate_corpus(root: str | Path, train_clips: int = 5, test_clips: int = 2,
                    frames: int = 24, size: int = 128, seed: int = 0,
                    annotate_every: int = 1, textured: bool = True) -> Path:
    """Write a complete train/test corpus; returns the dataset root."""
    root = Path(root)
    sets_dir = root / "ImageSets"
    sets_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    splits = {"train": train_clips, "test": test_clips}
    for split, count in splits.items():
        ids = []
        for i in range(count):
            clip_id = f"{split}_{i:02d}"
            generate_clip(root, clip_id, rng, frames, (size, size), annotate_every, textured)
            ids.append(clip_id)
        (sets_dir / f"{split}.txt").write_text("".join(f"{cid}\n" for cid in ids))
    return root


def generate_image_manifest(root: str | Path, count: int = 8, size: int = 128,
                            seed: int = 0, textured: bool = True) -> Path:
    """Write still images of figures plus masks and the two-column manifest."""
    root = Path(root)
    img_dir = root / "images"
    mask_dir = root / "masks"
    img_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    lines = []
    for i in range(count):
        background = _background((size, size), rng, textured)
        frame, mask = render_figure_frame(
            (size, size), background,
            torso_center=(rng.uniform(0.3, 0.7) * size, rng.uniform(0.4, 0.6) * size),
            torso_size=(int(rng.integers(size // 4, size // 2)), int(rng.integers(size // 7, size // 4))),
            limb_angle=rng.uniform(-math.pi / 2, math.pi / 6),
            torso_color=rng.uniform(170, 250, size=3),
            limb_color=rng.uniform(170, 250, size=3),
            limb_length=rng.uniform(0.2, 0.35) * size,
            limb_width=rng.uniform(5, 8) * size / 128,
        )
        img_path = img_dir / f"still_{i:03d}.jpg"
        mask_path = mask_dir / f"still_{i:03d}.png"
        _write_frame(img_path, frame)
        cv2.imwrite(str(mask_path), mask * 255)
        lines.append(f"{img_path}\t{mask_path}\n")

    manifest = root / "manifest.tsv"
    manifest.write_text("".join(lines))
    return manifest
