"""Report writers: benchmark tables, per-clip CSVs, histograms and figures.

Every report path emits machine-readable files (JSON/CSV) plus a rendered
matplotlib figure next to them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import BenchmarkReport, complexity_histogram


def render_benchmark_table(report: BenchmarkReport) -> str:
    """Human-readable table; scores are percentages with one decimal."""
    header = (
        f"{'':<12}{'J&F Mean':>10}{'J Mean':>9}{'J Recall':>10}{'J Decay':>9}"
        f"{'F Mean':>9}{'F Recall':>10}{'F Decay':>9}{'FPS':>8}"
    )
    fps = f"{report.fps:.1f}" if report.fps else "-"
    row = (
        f"{'overall':<12}{report.jf_mean * 100:>10.1f}{report.j.mean * 100:>9.1f}"
        f"{report.j.recall * 100:>10.1f}{report.j.decay * 100:>9.1f}"
        f"{report.f.mean * 100:>9.1f}{report.f.recall * 100:>10.1f}"
        f"{report.f.decay * 100:>9.1f}{fps:>8}"
    )
    lines = [header, "-" * len(header), row]
    return "\n".join(lines) + "\n"


def write_benchmark(report: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, report.txt, per_clip.csv and a per-clip score figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "report.json",
        "table": out_dir / "report.txt",
        "csv": out_dir / "per_clip.csv",
        "figure": out_dir / "per_clip.png",
    }

    paths["json"].write_text(json.dumps(report.as_dict(), indent=2) + "\n")
    paths["table"].write_text(render_benchmark_table(report))

    with open(paths["csv"], "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["clip_id", "j_mean", "f_mean", "frames"])
        for clip_id, row in report.per_clip.items():
            writer.writerow([clip_id, f"{row['j_mean']:.6f}", f"{row['f_mean']:.6f}",
                             row["frames"]])

    clips = list(report.per_clip)
    if clips:
        j_values = [report.per_clip[c]["j_mean"] for c in clips]
        f_values = [report.per_clip[c]["f_mean"] for c in clips]
        x = np.arange(len(clips))
        fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(clips)), 4))
        ax.bar(x - 0.2, j_values, width=0.4, label="J mean")
        ax.bar(x + 0.2, f_values, width=0.4, label="F mean")
        ax.set_xticks(x)
        ax.set_xticklabels(clips, rotation=45, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("score")
        ax.legend()
        fig.tight_layout()
        fig.savefig(paths["figure"])
        plt.close(fig)
    return paths


def write_complexity(per_clip_entropy: dict[str, float], out_dir: str | Path,
                     glcm_settings: dict, bins: int = 20) -> dict[str, Path]:
    """Write per-clip entropies, histogram CSV (bin_center, frequency) and figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "per_clip": out_dir / "complexity.csv",
        "histogram": out_dir / "histogram.csv",
        "figure": out_dir / "histogram.png",
        "json": out_dir / "complexity.json",
    }

    with open(paths["per_clip"], "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["clip_id", "mean_entropy_bits"])
        for clip_id, value in sorted(per_clip_entropy.items()):
            writer.writerow([clip_id, f"{value:.6f}"])

    values = list(per_clip_entropy.values())
    centers, freq = complexity_histogram(values, bins=bins)
    with open(paths["histogram"], "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_center", "frequency"])
        for center, count in zip(centers, freq):
            writer.writerow([f"{center:.6f}", int(count)])

    paths["json"].write_text(json.dumps({
        "glcm": glcm_settings,
        "clips": len(values),
        "mean_entropy_bits": float(np.mean(values)) if values else None,
        "std_entropy_bits": float(np.std(values)) if values else None,
    }, indent=2) + "\n")

    fig, ax = plt.subplots(figsize=(6, 4))
    if values:
        ax.bar(centers, freq, width=(centers[1] - centers[0]) if len(centers) > 1 else 0.1,
               edgecolor="black")
    ax.set_xlabel("co-occurrence entropy (bits)")
    ax.set_ylabel("clips")
    fig.tight_layout()
    fig.savefig(paths["figure"])
    plt.close(fig)
    return paths


def write_loss_curves(history: list[dict], out_path: str | Path) -> Path:
    """Render grand-total and component curves from the training history."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    video = [h for h in history if h.get("kind") == "video"]
    fig, ax = plt.subplots(figsize=(7, 4))
    if video:
        steps = [h["video_iter"] for h in video]
        for key in ("grand_total", "seg_final", "saliency", "part_total"):
            ax.plot(steps, [h[key] for h in video], label=key)
    ax.set_xlabel("video iteration")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


# fixed palette for part overlays (RGB), cycled if p exceeds its length
PART_PALETTE = np.array([
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
], dtype=np.uint8)


def part_overlay(saliency: np.ndarray, part_masks: np.ndarray,
                 saliency_threshold: float = 0.5) -> np.ndarray:
    """RGBA overlay: each pixel takes its argmax part's color, transparent
    where saliency falls below the threshold.

    saliency: h x w in [0, 1]; part_masks: p x h x w gated part maps.
    """
    parts, h, w = part_masks.shape
    labels = part_masks.argmax(axis=0)
    colors = PART_PALETTE[np.arange(parts) % len(PART_PALETTE)]
    rgba = np.zeros((h, w, 4), dtype=np.uint8)
    rgba[..., :3] = colors[labels]
    rgba[..., 3] = np.where(saliency >= saliency_threshold, 255, 0).astype(np.uint8)
    return rgba
