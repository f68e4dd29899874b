"""Training orchestration: alternating image/video steps, polynomial LR decay,
checkpointing, whole-clip inference and benchmark evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np
import torch

from .attention import downsample_gate
from .config import TrainConfig
from .dataio import (
    ClipDescriptor,
    SamplePair,
    augment_pair,
    image_as_pretrain_sample,
    load_image,
    load_mask,
    make_pair,
    read_image_manifest,
    sample_seed,
    scan_dataset,
)
from .errors import ConfigError, NumericsError
from .losses import (
    LossReport,
    PartSemanticBasis,
    SemanticExtractor,
    grand_total,
    part_loss_terms,
    segmentation_loss,
)
from .metrics import BenchmarkReport, FrameScore, aggregate, contour_f, jaccard
from .network import PortraitSegNet, build_model

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LR_DECAY_POWER = 0.9
MASK_THRESHOLD = 0.5  # strict >: a probability of exactly 0.5 is background


def schedule_lr(iteration: int, total_iters: int, max_lr: float) -> float:
    """Polynomial decay from max_lr: max_lr * (1 - iteration/total_iters)^0.9."""
    if not 0 <= iteration < total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {total_iters})")
    return max_lr * (1.0 - iteration / total_iters) ** LR_DECAY_POWER


def make_optimizer(model: PortraitSegNet, basis: PartSemanticBasis | None,
                   cfg: TrainConfig) -> torch.optim.SGD:
    """Momentum SGD with two named groups: the residual trunk and everything else."""
    backbone_params = list(model.encoder.trunk_parameters())
    trunk_ids = {id(p) for p in backbone_params}
    rest_params = [p for p in model.parameters() if id(p) not in trunk_ids]
    if basis is not None:
        rest_params += list(basis.parameters())
    return torch.optim.SGD(
        [
            {"params": backbone_params, "name": "backbone", "lr": cfg.lr_video_backbone_max},
            {"params": rest_params, "name": "rest", "lr": cfg.lr_video_rest_max},
        ],
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )


def apply_lr(optimizer: torch.optim.Optimizer, kind: str, iteration: int,
             total_iters: int, cfg: TrainConfig) -> dict[str, float]:
    """Set per-group learning rates for this step; returns the applied rates."""
    if kind == "image":
        rates = {"backbone": cfg.lr_image_max, "rest": cfg.lr_image_max}
    elif kind == "video":
        rates = {"backbone": cfg.lr_video_backbone_max, "rest": cfg.lr_video_rest_max}
    else:
        raise ValueError(f"unknown step kind '{kind}'")
    applied = {}
    for group in optimizer.param_groups:
        lr = schedule_lr(iteration, total_iters, rates[group["name"]])
        group["lr"] = lr
        applied[group["name"]] = lr
    return applied


def pairs_to_tensors(batch: list[SamplePair]) -> dict:
    """Stack a batch of pairs into model-ready tensors (images CHW, masks 1HW)."""

    def images(arrays):
        return torch.from_numpy(np.stack([a.transpose(2, 0, 1) for a in arrays]))

    def masks(arrays):
        if any(a is None for a in arrays):
            return None
        return torch.from_numpy(np.stack(arrays).astype(np.float32)).unsqueeze(1)

    return {
        "target": images([p.target_image for p in batch]),
        "reference": images([p.reference_image for p in batch]),
        "target_mask": masks([p.target_mask for p in batch]),
        "reference_mask": masks([p.reference_mask for p in batch]),
        "ids": [f"{p.clip_id}:{p.target_index}" for p in batch],
    }


def _aux_loss(appearance, mask: torch.Tensor) -> torch.Tensor:
    """Deep supervision: every pyramid head upsampled to mask resolution."""
    total = 0.0
    for aux in appearance.aux_logits:
        logits = torch.nn.functional.interpolate(
            aux.data, size=mask.shape[-2:], mode="bilinear", align_corners=False
        )
        total = total + segmentation_loss(torch.sigmoid(logits), mask)
    return total / len(appearance.aux_logits)


def _part_losses_enabled(model: PortraitSegNet, cfg: TrainConfig) -> bool:
    # with a single part the self-supervised part losses carry no signal
    return model.use_part_attention and cfg.parts_p > 1 and bool(cfg.part_terms)


def compute_video_loss(model: PortraitSegNet, extractor: SemanticExtractor | None,
                       basis: PartSemanticBasis | None, tensors: dict,
                       cfg: TrainConfig) -> tuple[torch.Tensor, LossReport]:
    """Forward pass plus the full weighted loss for one video batch."""
    target_mask = tensors["target_mask"]
    reference_mask = tensors["reference_mask"]
    if target_mask is None or reference_mask is None:
        raise ValueError("video training batches need masks on both frames")

    outputs = model(tensors["target"], tensors["reference"], target_mask, reference_mask)
    components: dict[str, torch.Tensor] = {}
    skipped: list[str] = []

    components["seg_final"] = segmentation_loss(outputs.pred, target_mask)
    components["seg_aux"] = (
        _aux_loss(outputs.appearance_t, target_mask)
        + _aux_loss(outputs.appearance_r, reference_mask)
    ) / 2.0

    if model.use_part_attention:
        saliency = 0.0
        for bundle, mask in ((outputs.bundle_t, target_mask), (outputs.bundle_r, reference_mask)):
            gate = downsample_gate(mask, bundle.saliency.shape[-2:])
            saliency = saliency + segmentation_loss(bundle.saliency, gate)
        components["saliency"] = saliency
    else:
        skipped.append("saliency")

    if _part_losses_enabled(model, cfg):
        per_term: dict[str, torch.Tensor] = {}
        for bundle, frame in ((outputs.bundle_t, tensors["target"]),
                              (outputs.bundle_r, tensors["reference"])):
            feats = None
            if "sem" in cfg.part_terms:
                feats = extractor(frame, out_size=bundle.part_assign.shape[-2:])
            gt_terms = part_loss_terms(bundle.masked_parts_gt, feats,
                                       basis.basis if basis else None, cfg.part_terms)
            pred_terms = part_loss_terms(bundle.masked_parts_pred, feats,
                                         basis.basis if basis else None, cfg.part_terms)
            for name in gt_terms:
                value = (gt_terms[name] + pred_terms[name]) / 2.0
                per_term[name] = per_term.get(name, 0.0) + value
        components.update(per_term)
        components["part_total"] = sum(per_term.values())
    else:
        skipped.append("part_total")

    loss = sum(cfg.loss_weights[name] * components[name]
               for name in cfg.loss_weights if name in components)
    report = grand_total({k: float(v) for k, v in components.items()},
                         cfg.loss_weights, tuple(skipped))
    return loss, report


def train_step_video(model: PortraitSegNet, extractor: SemanticExtractor | None,
                     basis: PartSemanticBasis | None, optimizer: torch.optim.Optimizer,
                     batch: list[SamplePair], cfg: TrainConfig, iteration: int,
                     total_iters: int) -> LossReport:
    """One video optimizer step with the per-group video learning rates."""
    model.train()
    tensors = pairs_to_tensors(batch)
    loss, report = compute_video_loss(model, extractor, basis, tensors, cfg)
    if not torch.isfinite(loss):
        raise NumericsError(
            f"non-finite loss at video iteration {iteration}", tensors["ids"]
        )
    apply_lr(optimizer, "video", iteration, total_iters, cfg)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return report


def train_step_image(model: PortraitSegNet, optimizer: torch.optim.Optimizer,
                     batch: list[SamplePair], cfg: TrainConfig, iteration: int,
                     total_iters: int) -> LossReport:
    """One still-image step: encoder deep supervision only, image learning rate.

    The part-attention and fusion stages see no gradient, so their parameters
    are bitwise unchanged.
    """
    model.train()
    tensors = pairs_to_tensors(batch)
    if tensors["target_mask"] is None or tensors["reference_mask"] is None:
        raise ValueError("image pretraining batches need masks on both views")

    aux = 0.0
    for key, mask_key in (("target", "target_mask"), ("reference", "reference_mask")):
        appearance = model.encoder(tensors[key])
        aux = aux + _aux_loss(appearance, tensors[mask_key])
    aux = aux / 2.0
    loss = cfg.loss_weights.get("seg_aux", 0.0) * aux
    if not torch.isfinite(loss):
        raise NumericsError(
            f"non-finite loss at image iteration {iteration}", tensors["ids"]
        )
    apply_lr(optimizer, "image", iteration, total_iters, cfg)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return grand_total({"seg_aux": float(aux)}, cfg.loss_weights,
                       skipped=("seg_final", "saliency", "part_total"))


def alternate_iterator(image_source, video_source, schedule: tuple[int, int]):
    """Yield ('image'|'video', batch) following the repeating alternation pattern."""
    image_iters, video_iters = schedule
    if image_iters < 0 or video_iters < 0:
        raise ConfigError("alternation counts must be >= 0")
    if image_iters + video_iters == 0:
        raise ConfigError("alternation schedule is empty")
    if image_iters > 0 and image_source is None:
        raise ConfigError("alternation requests image iterations but no image source is set")
    while True:
        for _ in range(image_iters):
            yield "image", next(image_source)
        for _ in range(video_iters):
            yield "video", next(video_source)


def training_pairs(clips: list[ClipDescriptor]) -> list[tuple[ClipDescriptor, int]]:
    """All trainable (clip, target_index) pairs: annotated targets past frame 0,
    restricted to clips whose reference frame is annotated."""
    pairs = []
    for clip in clips:
        if 0 not in clip.annotation_paths:
            log.warning("clip '%s' lacks a frame-0 annotation; skipped for training",
                        clip.clip_id)
            continue
        pairs.extend((clip, idx) for idx in clip.annotated_indices if idx > 0)
    return pairs


def video_batch_source(clips: list[ClipDescriptor], cfg: TrainConfig):
    """Infinite epoch-shuffled stream of augmented video batches."""
    pairs = training_pairs(clips)
    if not pairs:
        raise ConfigError("no annotated training pairs found")
    augment_base = cfg.augment()
    epoch = 0
    while True:
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(pairs))
        for start in range(0, len(order), cfg.batch_size):
            batch = []
            for i in order[start:start + cfg.batch_size]:
                clip, idx = pairs[i]
                pair = make_pair(clip, idx)
                aug = replace(augment_base, seed=sample_seed(cfg.seed, clip.clip_id, idx, epoch))
                batch.append(augment_pair(pair, aug))
            yield batch
        epoch += 1


def image_batch_source(manifest_path: str | Path, cfg: TrainConfig):
    """Infinite epoch-shuffled stream of still-image pretraining batches."""
    entries = read_image_manifest(manifest_path)
    if not entries:
        raise ConfigError(f"image manifest {manifest_path} is empty")
    augment_base = cfg.augment()
    epoch = 0
    while True:
        order = np.random.default_rng([cfg.seed, 1_000_003 + epoch]).permutation(len(entries))
        for start in range(0, len(order), cfg.batch_size):
            batch = []
            for i in order[start:start + cfg.batch_size]:
                image_path, mask_path = entries[i]
                aug = replace(augment_base,
                              seed=sample_seed(cfg.seed, str(image_path), 0, epoch))
                batch.append(image_as_pretrain_sample(image_path, mask_path, aug))
            yield batch
        epoch += 1


# --------------------------------------------------------------------------
# checkpointing


def save_checkpoint(path: str | Path, model: PortraitSegNet,
                    basis: PartSemanticBasis | None, optimizer: torch.optim.Optimizer | None,
                    cfg: TrainConfig, epoch: int, history: list[dict] | None = None) -> None:
    """Single-archive checkpoint; the config snapshot makes it self-describing.

    Keys: version, config, epoch, history, model (state_dict with
    'encoder.*' / 'part_attention.*' / 'fusion.*' / 'mask_head.*' entries),
    basis (state_dict or None), optimizer (state_dict or None).
    """
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "epoch": epoch,
        "history": history or [],
        "model": model.state_dict(),
        "basis": basis.state_dict() if basis is not None else None,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


@dataclass
class CheckpointBundle:
    model: PortraitSegNet
    basis: PartSemanticBasis | None
    cfg: TrainConfig
    epoch: int
    history: list[dict]
    optimizer_state: dict | None


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')}")
    cfg = TrainConfig.from_dict(payload["config"])
    model = build_model(cfg)
    model.load_state_dict(payload["model"])
    basis = None
    if payload["basis"] is not None:
        parts, dim = payload["basis"]["basis"].shape
        basis = PartSemanticBasis(parts, dim)
        basis.load_state_dict(payload["basis"])
    return CheckpointBundle(
        model=model,
        basis=basis,
        cfg=cfg,
        epoch=payload["epoch"],
        history=payload["history"],
        optimizer_state=payload["optimizer"],
    )


# --------------------------------------------------------------------------
# inference and evaluation


@dataclass
class ClipInference:
    clip_id: str
    frame_indices: list[int]
    probabilities: list[np.ndarray]  # native resolution, float32 in (0, 1)
    masks: list[np.ndarray]  # native resolution, uint8 in {0, 1}
    fps: float
    skipped: list[int] = field(default_factory=list)


def _resize_image(image: np.ndarray, size: int) -> np.ndarray:
    return cv2.resize(image, (size, size), interpolation=cv2.INTER_LINEAR)


@torch.no_grad()
def infer_clip(model: PortraitSegNet, clip: ClipDescriptor, cfg: TrainConfig) -> ClipInference:
    """Segment every frame against frame 0; probabilities are resized back to
    native resolution before the strict-0.5 threshold. FPS covers model forward
    plus resizing, not disk reads."""
    model.eval()
    reference_native = load_image(clip.frame_paths[0])
    reference = torch.from_numpy(
        _resize_image(reference_native, cfg.input_size).transpose(2, 0, 1)
    ).unsqueeze(0)

    indices, probs, masks, skipped = [], [], [], []
    model_time = 0.0
    for idx, path in enumerate(clip.frame_paths):
        try:
            native = load_image(path)
        except OSError as exc:
            log.warning("skipping unreadable frame %s (%s)", path, exc)
            skipped.append(idx)
            continue
        height, width = native.shape[:2]
        start = time.perf_counter()
        target = torch.from_numpy(
            _resize_image(native, cfg.input_size).transpose(2, 0, 1)
        ).unsqueeze(0)
        pred = model(target, reference).pred[0, 0].numpy()
        prob = cv2.resize(pred, (width, height), interpolation=cv2.INTER_LINEAR)
        mask = (prob > MASK_THRESHOLD).astype(np.uint8)
        model_time += time.perf_counter() - start
        indices.append(idx)
        probs.append(prob)
        masks.append(mask)

    fps = len(indices) / model_time if model_time > 0 else 0.0
    return ClipInference(clip.clip_id, indices, probs, masks, fps, skipped)


def score_clip(inference: ClipInference, clip: ClipDescriptor) -> list[FrameScore]:
    """J/F scores on the clip's annotated frames."""
    position = {idx: i for i, idx in enumerate(inference.frame_indices)}
    scores = []
    for idx in clip.annotated_indices:
        if idx not in position:
            continue
        gt = load_mask(clip.annotation_paths[idx])
        pred = inference.masks[position[idx]]
        scores.append(FrameScore(
            clip_id=clip.clip_id,
            frame_index=idx,
            j=jaccard(pred, gt),
            f=contour_f(pred, gt),
        ))
    return scores


def evaluate_model(model: PortraitSegNet, clips: list[ClipDescriptor],
                   cfg: TrainConfig) -> BenchmarkReport:
    """infer_clip over every clip, scored on annotated frames only."""
    scores: list[FrameScore] = []
    total_frames = 0
    total_time = 0.0
    for clip in clips:
        inference = infer_clip(model, clip, cfg)
        scores.extend(score_clip(inference, clip))
        if inference.fps > 0:
            total_frames += len(inference.frame_indices)
            total_time += len(inference.frame_indices) / inference.fps
    fps = total_frames / total_time if total_time > 0 else None
    return aggregate(scores, fps=fps)


# --------------------------------------------------------------------------
# the training loop


class Trainer:
    """Owns the model, optimizer and data streams for one training run."""

    def __init__(self, cfg: TrainConfig, out_dir: str | Path):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(cfg.seed)
        np.random.seed(cfg.seed % (2 ** 32))

        self.model = build_model(cfg)
        self.extractor = None
        self.basis = None
        if _part_losses_enabled(self.model, cfg) and "sem" in cfg.part_terms:
            self.extractor = SemanticExtractor(cfg.semantic_extractor, cfg.semantic_pretrained)
            self.basis = PartSemanticBasis(cfg.parts_p, self.extractor.out_channels,
                                           self.extractor.extractor_id)
        self.optimizer = make_optimizer(self.model, self.basis, cfg)

        self.train_clips = scan_dataset(cfg.dataset_root, "train")
        self.pairs = training_pairs(self.train_clips)
        if not self.pairs:
            raise ConfigError("no annotated training pairs found")
        self.batches_per_epoch = -(-len(self.pairs) // cfg.batch_size)
        self.total_video_iters = cfg.total_video_iters or cfg.epochs * self.batches_per_epoch
        self.history: list[dict] = []

    def fit(self, log_path: str | Path | None = None,
            progress_every: int = 50) -> list[dict]:
        """Run the alternating loop for the configured number of video iterations.

        Appends one JSON record per optimizer step to the training log and
        returns the full history.
        """
        cfg = self.cfg
        log_file = Path(log_path) if log_path else self.out_dir / "training_log.jsonl"
        video_source = video_batch_source(self.train_clips, cfg)
        image_source = None
        if cfg.image_iters > 0:
            if not cfg.image_manifest:
                raise ConfigError("image_iters > 0 requires image_manifest")
            image_source = image_batch_source(cfg.image_manifest, cfg)

        stream = alternate_iterator(image_source, video_source,
                                    (cfg.image_iters, cfg.video_iters))
        video_iter = 0
        step = 0
        with open(log_file, "w") as handle:
            while video_iter < self.total_video_iters:
                kind, batch = next(stream)
                if kind == "image":
                    report = train_step_image(self.model, self.optimizer, batch, cfg,
                                              video_iter, self.total_video_iters)
                else:
                    report = train_step_video(self.model, self.extractor, self.basis,
                                              self.optimizer, batch, cfg,
                                              video_iter, self.total_video_iters)
                    video_iter += 1
                record = {"step": step, "video_iter": video_iter, "kind": kind}
                record.update(report.as_dict())
                handle.write(json.dumps(record) + "\n")
                self.history.append(record)
                step += 1

                if video_iter > 0 and video_iter % self.batches_per_epoch == 0 and kind == "video":
                    epoch = video_iter // self.batches_per_epoch
                    if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                        self.save(self.out_dir / "checkpoint.pt", epoch)
                if progress_every and step % progress_every == 0:
                    log.info("step %d (video %d/%d) %s grand_total=%.4f",
                             step, video_iter, self.total_video_iters, kind,
                             report.grand_total)

        final_epoch = -(-self.total_video_iters // self.batches_per_epoch)
        self.save(self.out_dir / "checkpoint.pt", final_epoch)
        return self.history

    def save(self, path: str | Path, epoch: int) -> None:
        save_checkpoint(path, self.model, self.basis, self.optimizer, self.cfg,
                        epoch, self.history)

    def evaluate(self, split: str = "test") -> BenchmarkReport:
        clips = scan_dataset(self.cfg.dataset_root, split)
        return evaluate_model(self.model, clips, self.cfg)
