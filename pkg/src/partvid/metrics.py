"""Benchmark metrics: region similarity J, contour accuracy F, their
mean/recall/decay aggregation, and co-occurrence-entropy scene complexity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .config import GlcmConfig
from .dataio import ClipDescriptor

log = logging.getLogger(__name__)

RECALL_THRESHOLD = 0.5
BOUNDARY_TOLERANCE_FRACTION = 0.008  # of the image diagonal, rounded up


@dataclass
class FrameScore:
    clip_id: str
    frame_index: int
    j: float
    f: float


@dataclass
class MetricStats:
    mean: float
    recall: float
    decay: float


@dataclass
class BenchmarkReport:
    j: MetricStats
    f: MetricStats
    jf_mean: float
    per_clip: dict[str, dict[str, float]] = field(default_factory=dict)
    fps: float | None = None

    def as_dict(self) -> dict:
        return {
            "j_mean": self.j.mean,
            "j_recall": self.j.recall,
            "j_decay": self.j.decay,
            "f_mean": self.f.mean,
            "f_recall": self.f.recall,
            "f_decay": self.f.decay,
            "jf_mean": self.jf_mean,
            "per_clip": self.per_clip,
            "fps": self.fps,
        }


def jaccard(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary masks; both empty counts as 1.0."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    pred = pred > 0
    gt = gt > 0
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Boundary pixels: in the mask with at least one 4-neighbor outside it.

    Outside the image counts as background (4-connected erosion difference).
    """
    m = np.asarray(mask) > 0
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d mask, got shape {m.shape}")
    padded = np.pad(m, 1, constant_values=False)
    eroded = (
        m
        & padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    return m & ~eroded


def default_boundary_tolerance(shape: tuple[int, int]) -> int:
    h, w = shape
    return max(1, math.ceil(BOUNDARY_TOLERANCE_FRACTION * math.hypot(h, w)))


def _disk(radius: int) -> np.ndarray:
    grid = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    return (yy ** 2 + xx ** 2) <= radius ** 2


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0 or not mask.any():
        return mask.copy()
    kernel = _disk(radius).astype(np.uint8)
    return cv2.dilate(mask.astype(np.uint8), kernel) > 0


def contour_f(pred: np.ndarray, gt: np.ndarray, tolerance_px: int | None = None) -> float:
    """Boundary F-measure: precision/recall of boundary pixels matched within
    a Euclidean pixel tolerance (default 0.8% of the image diagonal, rounded up)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if tolerance_px is None:
        tolerance_px = default_boundary_tolerance(pred.shape)

    pred_b = mask_boundary(pred)
    gt_b = mask_boundary(gt)
    n_pred = np.count_nonzero(pred_b)
    n_gt = np.count_nonzero(gt_b)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0

    precision = np.count_nonzero(pred_b & _dilate(gt_b, tolerance_px)) / n_pred
    recall = np.count_nonzero(gt_b & _dilate(pred_b, tolerance_px)) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def temporal_quarters(n: int) -> list[tuple[int, int]]:
    """Split n ordered items into 4 contiguous quarters; the remainder goes to
    the middle quarters (second first, then third, then second again)."""
    base, extra = divmod(n, 4)
    sizes = [base] * 4
    for i, target in zip(range(extra), (1, 2, 1)):
        sizes[target] += 1
    bounds = np.cumsum([0] + sizes)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(4)]


def _clip_decay(values: list[float]) -> float:
    quarters = temporal_quarters(len(values))
    arr = np.asarray(values, dtype=np.float64)
    first = arr[quarters[0][0]:quarters[0][1]].mean()
    last = arr[quarters[3][0]:quarters[3][1]].mean()
    return float(first - last)


def aggregate(scores: list[FrameScore], fps: float | None = None) -> BenchmarkReport:
    """Reduce per-frame scores to mean/recall/decay per metric plus per-clip means.

    Mean and recall average over all frames; decay averages per-clip
    first-minus-last temporal-quarter differences. Clips with fewer than 4
    scored frames are excluded from decay with a warning.
    """
    if not scores:
        raise ValueError("no frame scores to aggregate")
    by_clip: dict[str, list[FrameScore]] = {}
    for score in scores:
        by_clip.setdefault(score.clip_id, []).append(score)
    for clip_scores in by_clip.values():
        clip_scores.sort(key=lambda s: s.frame_index)

    stats = {}
    for metric in ("j", "f"):
        values = np.array([getattr(s, metric) for s in scores], dtype=np.float64)
        decays = []
        for clip_id, clip_scores in by_clip.items():
            if len(clip_scores) < 4:
                log.warning("clip '%s' has %d scored frames; excluded from decay",
                            clip_id, len(clip_scores))
                continue
            decays.append(_clip_decay([getattr(s, metric) for s in clip_scores]))
        stats[metric] = MetricStats(
            mean=float(values.mean()),
            recall=float((values > RECALL_THRESHOLD).mean()),
            decay=float(np.mean(decays)) if decays else 0.0,
        )

    per_clip = {
        clip_id: {
            "j_mean": float(np.mean([s.j for s in clip_scores])),
            "f_mean": float(np.mean([s.f for s in clip_scores])),
            "frames": len(clip_scores),
        }
        for clip_id, clip_scores in sorted(by_clip.items())
    }
    return BenchmarkReport(
        j=stats["j"],
        f=stats["f"],
        jf_mean=(stats["j"].mean + stats["f"].mean) / 2.0,
        per_clip=per_clip,
        fps=fps,
    )


def glcm_entropy(gray: np.ndarray, levels: int = 32,
                 offsets: tuple[tuple[int, int], ...] = ((1, 0), (0, 1), (1, 1), (1, -1))) -> float:
    """Shannon entropy (bits) of the symmetric gray-level co-occurrence matrix.

    The image is quantized into `levels` bins; pairs are accumulated over every
    (dx, dy) offset and its reverse, then normalized to a joint distribution.
    """
    if levels < 2:
        raise ValueError(f"levels must be >= 2, got {levels}")
    if not offsets:
        raise ValueError("offsets must be non-empty")
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale image, got shape {gray.shape}")
    h, w = gray.shape
    quant = (np.clip(gray, 0, 255).astype(np.int64) * levels) // 256

    counts = np.zeros((levels, levels), dtype=np.int64)
    for dx, dy in offsets:
        if abs(dx) >= w or abs(dy) >= h:
            raise ValueError(f"image of shape {gray.shape} smaller than offset ({dx}, {dy})")
        ys = slice(max(0, -dy), h - max(0, dy))
        xs = slice(max(0, -dx), w - max(0, dx))
        ys2 = slice(max(0, dy), h - max(0, -dy))
        xs2 = slice(max(0, dx), w - max(0, -dx))
        a = quant[ys, xs].ravel()
        b = quant[ys2, xs2].ravel()
        counts += np.bincount(a * levels + b, minlength=levels * levels).reshape(levels, levels)
    counts = counts + counts.T  # symmetric counting
    probs = counts / counts.sum()
    nonzero = probs[probs > 0]
    return float(-(nonzero * np.log2(nonzero)).sum())


def frame_luminance(frame_rgb: np.ndarray, resize_short: int | None = None) -> np.ndarray:
    """8-bit luminance of an RGB frame, optionally resized to a short-side target."""
    gray = cv2.cvtColor(frame_rgb, cv2.COLOR_RGB2GRAY)
    if resize_short:
        h, w = gray.shape
        scale = resize_short / min(h, w)
        if not math.isclose(scale, 1.0):
            gray = cv2.resize(gray, (round(w * scale), round(h * scale)),
                              interpolation=cv2.INTER_LINEAR)
    return gray


def clip_complexity(clip: ClipDescriptor, cfg: GlcmConfig | None = None) -> tuple[float, list[float]]:
    """Average co-occurrence entropy over a clip's frames, plus the per-frame values."""
    cfg = cfg or GlcmConfig()
    entropies = []
    for path in clip.frame_paths:
        raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if raw is None:
            raise OSError(f"cannot read frame: {path}")
        gray = frame_luminance(cv2.cvtColor(raw, cv2.COLOR_BGR2RGB), cfg.resize_short)
        entropies.append(glcm_entropy(gray, cfg.levels, cfg.offsets))
    return float(np.mean(entropies)), entropies


def complexity_histogram(values: list[float], bins: int = 20,
                         value_range: tuple[float, float] | None = None
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of per-clip entropies -> (bin centers, frequencies)."""
    freq, edges = np.histogram(values, bins=bins, range=value_range)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, freq
