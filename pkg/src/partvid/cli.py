"""Command-line entry points: train, eval, infer, complexity, visualize-parts.

Exit codes: 0 success, 2 usage/configuration error, 3 numerical failure.
The effective configuration is echoed at startup so runs are reproducible
from their logs alone.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np
import torch

from .config import GlcmConfig, TrainConfig, apply_overrides, load_config
from .dataio import scan_dataset
from .engine import Trainer, evaluate_model, infer_clip, load_checkpoint
from .errors import ConfigError, DatasetError, NumericsError
from .metrics import clip_complexity
from .report import (
    part_overlay,
    render_benchmark_table,
    write_benchmark,
    write_complexity,
    write_loss_curves,
)

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partvid",
                                     description="Video portrait segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_checkpoint: bool = False):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, repeatable")
        p.add_argument("--output-dir", default="outputs", help="where results are written")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if needs_checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint archive")

    common(sub.add_parser("train", help="train a model"))
    common(sub.add_parser("eval", help="benchmark a checkpoint on a split"),
           needs_checkpoint=True)
    sub.choices["eval"].add_argument("--split", default="test")
    common(sub.add_parser("infer", help="write per-frame masks for clips"),
           needs_checkpoint=True)
    sub.choices["infer"].add_argument("--split", default="test")
    sub.choices["infer"].add_argument("--clip", default=None, help="restrict to one clip id")
    sub.choices["infer"].add_argument("--save-probs", action="store_true",
                                      help="also save probability maps as .npy")
    common(sub.add_parser("complexity", help="co-occurrence entropy analysis"))
    sub.choices["complexity"].add_argument("--split", default="train")
    common(sub.add_parser("visualize-parts", help="write part-overlay PNGs"),
           needs_checkpoint=True)
    sub.choices["visualize-parts"].add_argument("--split", default="test")
    sub.choices["visualize-parts"].add_argument("--clip", default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg = apply_overrides(cfg, [f"seed={args.seed}"])
    print("effective config: " + json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg


def _select_clips(cfg: TrainConfig, split: str, clip_id: str | None):
    clips = scan_dataset(cfg.dataset_root, split)
    if clip_id is not None:
        clips = [c for c in clips if c.clip_id == clip_id]
        if not clips:
            raise ConfigError(f"clip '{clip_id}' not found in split '{split}'")
    return clips


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(args.output_dir)
    trainer = Trainer(cfg, out_dir)
    try:
        history = trainer.fit()
    except NumericsError as exc:
        dump = out_dir / "nan_dump.json"
        dump.write_text(json.dumps({"error": str(exc), "batch_ids": exc.batch_ids}, indent=2))
        print(f"numerical failure: {exc}; offending batch written to {dump}", file=sys.stderr)
        return 3
    write_loss_curves(history, out_dir / "loss_curves.png")
    print(f"training finished: checkpoint at {out_dir / 'checkpoint.pt'}")
    return 0


def cmd_eval(args) -> int:
    cfg_cli = resolve_config(args)
    bundle = load_checkpoint(args.checkpoint)
    cfg = bundle.cfg
    if args.override or args.config:
        # CLI-side config wins where given (e.g. a different dataset_root)
        cfg = cfg_cli
    clips = scan_dataset(cfg.dataset_root, args.split)
    report = evaluate_model(bundle.model, clips, cfg)
    paths = write_benchmark(report, args.output_dir)
    print(render_benchmark_table(report), end="")
    print(f"report written to {paths['json']}")
    return 0


def cmd_infer(args) -> int:
    cfg_cli = resolve_config(args)
    bundle = load_checkpoint(args.checkpoint)
    cfg = cfg_cli if (args.override or args.config) else bundle.cfg
    out_dir = Path(args.output_dir)
    for clip in _select_clips(cfg, args.split, args.clip):
        inference = infer_clip(bundle.model, clip, cfg)
        clip_dir = out_dir / clip.clip_id
        clip_dir.mkdir(parents=True, exist_ok=True)
        for idx, mask, prob in zip(inference.frame_indices, inference.masks,
                                   inference.probabilities):
            cv2.imwrite(str(clip_dir / f"{idx:05d}.png"), mask * 255)
            if args.save_probs:
                np.save(clip_dir / f"{idx:05d}_prob.npy", prob)
        print(f"{clip.clip_id}: {len(inference.masks)} masks "
              f"({inference.fps:.2f} fps, {len(inference.skipped)} skipped)")
    return 0


def cmd_complexity(args) -> int:
    cfg = resolve_config(args)
    glcm = GlcmConfig()
    clips = scan_dataset(cfg.dataset_root, args.split)
    per_clip = {}
    for clip in clips:
        mean_entropy, _ = clip_complexity(clip, glcm)
        per_clip[clip.clip_id] = mean_entropy
        print(f"{clip.clip_id}: {mean_entropy:.4f} bits")
    settings = {
        "levels": glcm.levels,
        "offsets": [list(o) for o in glcm.offsets],
        "resize_short": glcm.resize_short,
    }
    paths = write_complexity(per_clip, args.output_dir, settings)
    print(f"complexity report written to {paths['json']}")
    return 0


def cmd_visualize_parts(args) -> int:
    cfg_cli = resolve_config(args)
    bundle = load_checkpoint(args.checkpoint)
    cfg = cfg_cli if (args.override or args.config) else bundle.cfg
    model = bundle.model
    if not model.use_part_attention:
        raise ConfigError("checkpoint was trained without the part-attention stage")
    model.eval()
    out_dir = Path(args.output_dir)

    from .dataio import load_image

    for clip in _select_clips(cfg, args.split, args.clip):
        clip_dir = out_dir / clip.clip_id
        clip_dir.mkdir(parents=True, exist_ok=True)
        ref_native = load_image(clip.frame_paths[0])
        reference = torch.from_numpy(
            cv2.resize(ref_native, (cfg.input_size, cfg.input_size)).transpose(2, 0, 1)
        ).unsqueeze(0)
        for idx, path in enumerate(clip.frame_paths):
            native = load_image(path)
            height, width = native.shape[:2]
            target = torch.from_numpy(
                cv2.resize(native, (cfg.input_size, cfg.input_size)).transpose(2, 0, 1)
            ).unsqueeze(0)
            with torch.no_grad():
                outputs = model(target, reference)
            saliency = outputs.bundle_t.saliency[0, 0].numpy()
            parts = outputs.bundle_t.masked_parts_pred[0].numpy()
            rgba = part_overlay(saliency, parts)
            rgba = cv2.resize(rgba, (width, height), interpolation=cv2.INTER_NEAREST)
            cv2.imwrite(str(clip_dir / f"{idx:05d}.png"),
                        cv2.cvtColor(rgba, cv2.COLOR_RGBA2BGRA))
        print(f"{clip.clip_id}: {len(clip.frame_paths)} overlays")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "complexity": cmd_complexity,
    "visualize-parts": cmd_visualize_parts,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
