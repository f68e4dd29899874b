"""Cross-frame attention discriminated by unsupervised parts.

Three stages, all operating on a downsampled, channel-compressed copy of the
appearance features:

1. decoupling: predict a foreground saliency map, split features into p
   per-part feature maps, and softmax-normalize a shared assignment head over
   the p parts. Every operator here is weight-shared between frames.
2. correlation: one asymmetric cross-attention per part; queries come from
   the target frame, keys/values from the reference frame.
3. assembly: per-part correlation features are gated by the predicted part
   masks and summed into one motion feature map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class PartBundle:
    """Per-frame decoupling products at the module's internal resolution."""

    saliency: torch.Tensor  # B x 1 x h x w, in (0, 1)
    part_assign: torch.Tensor  # B x p x h x w, softmax over parts
    part_feats: list[torch.Tensor]  # p tensors of B x c' x h x w
    masked_parts_pred: torch.Tensor  # B x p x h x w, saliency * assignment
    masked_parts_gt: torch.Tensor | None = None  # gated by downsampled ground truth


@dataclass
class MotionFeatures:
    per_part: list[torch.Tensor]  # p tensors of B x c' x h x w
    assembled: torch.Tensor  # B x c' x h x w


def mask_parts(gate: torch.Tensor, part_assign: torch.Tensor) -> torch.Tensor:
    """Gate each part assignment map elementwise: out[k] = gate * assign[k]."""
    if gate.shape[-2:] != part_assign.shape[-2:]:
        raise ValueError(
            f"gate spatial size {tuple(gate.shape[-2:])} != assignment "
            f"{tuple(part_assign.shape[-2:])}"
        )
    return gate * part_assign


def assemble_motion(per_part: list[torch.Tensor], masked_parts: torch.Tensor) -> torch.Tensor:
    """Sum part correlation features weighted by their predicted part masks."""
    if len(per_part) != masked_parts.shape[1]:
        raise ValueError(
            f"got {len(per_part)} correlation maps but {masked_parts.shape[1]} part masks"
        )
    out = torch.zeros_like(per_part[0])
    for k, feats in enumerate(per_part):
        out = out + feats * masked_parts[:, k:k + 1]
    return out


def downsample_gate(mask: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Area-average a full-resolution mask down to the internal grid (soft values)."""
    return F.adaptive_avg_pool2d(mask, size)


class FeatureCompressor(nn.Module):
    """Downsample by 2 (strided 3x3) then compress channels (1x1)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.down = nn.Conv2d(in_channels, in_channels, kernel_size=3, stride=2, padding=1)
        self.bn = nn.BatchNorm2d(in_channels)
        self.compress = nn.Conv2d(in_channels, out_channels, kernel_size=1)

    def forward(self, x):
        return self.compress(F.relu(self.bn(self.down(x))))


class SaliencyHead(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels // 2, kernel_size=3, padding=1)
        self.out = nn.Conv2d(channels // 2, 1, kernel_size=1)

    def forward(self, x):
        return torch.sigmoid(self.out(F.relu(self.conv(x))))


class PartBranch(nn.Module):
    """One part's feature extractor: 1x1 -> 3x3 -> 1x1."""

    def __init__(self, channels: int):
        super().__init__()
        self.reduce = nn.Conv2d(channels, channels, kernel_size=1)
        self.conv = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.project = nn.Conv2d(channels, channels, kernel_size=1)

    def forward(self, x):
        x = F.relu(self.reduce(x))
        x = F.relu(self.conv(x))
        return self.project(x)


class PartCrossAttention(nn.Module):
    """Single-head attention from target-part queries to reference-part keys/values."""

    def __init__(self, channels: int):
        super().__init__()
        self.query = nn.Conv2d(channels, channels, kernel_size=1)
        self.key = nn.Conv2d(channels, channels, kernel_size=1)
        self.value = nn.Conv2d(channels, channels, kernel_size=1)
        self.scale = 1.0 / math.sqrt(channels)

    def attention_map(self, target_feats: torch.Tensor,
                      reference_feats: torch.Tensor) -> torch.Tensor:
        """Row-stochastic attention weights, B x (h*w target) x (h*w reference)."""
        b, c = target_feats.shape[:2]
        q = self.query(target_feats).flatten(2)  # B x c x Nt
        k = self.key(reference_feats).flatten(2)  # B x c x Nr
        logits = torch.bmm(q.transpose(1, 2), k) * self.scale
        return torch.softmax(logits, dim=-1)

    def forward(self, target_feats: torch.Tensor, reference_feats: torch.Tensor) -> torch.Tensor:
        b, c, h, w = target_feats.shape
        attn = self.attention_map(target_feats, reference_feats)
        v = self.value(reference_feats).flatten(2)  # B x c x Nr
        out = torch.bmm(v, attn.transpose(1, 2))  # B x c x Nt
        return out.view(b, c, h, w)


class InterFramePartAttention(nn.Module):
    """Full part-attention stage. The decoupling operators are shared across frames;
    each part owns its cross-attention block."""

    def __init__(self, in_channels: int = 256, compressed_channels: int = 128, parts: int = 5):
        super().__init__()
        if parts < 1:
            raise ValueError(f"parts must be >= 1, got {parts}")
        self.parts = parts
        self.compress = FeatureCompressor(in_channels, compressed_channels)
        self.saliency_head = SaliencyHead(compressed_channels)
        self.branches = nn.ModuleList(PartBranch(compressed_channels) for _ in range(parts))
        self.assign_head = nn.Conv2d(compressed_channels, 1, kernel_size=1)
        self.attention = nn.ModuleList(PartCrossAttention(compressed_channels) for _ in range(parts))

    def decouple(self, compressed: torch.Tensor) -> tuple[list[torch.Tensor], torch.Tensor]:
        """Part features plus the softmax-normalized assignment maps."""
        part_feats = [branch(compressed) for branch in self.branches]
        logits = torch.cat([self.assign_head(p) for p in part_feats], dim=1)
        return part_feats, torch.softmax(logits, dim=1)

    def _bundle(self, compressed: torch.Tensor, gt_mask: torch.Tensor | None) -> PartBundle:
        saliency = self.saliency_head(compressed)
        part_feats, part_assign = self.decouple(compressed)
        masked_pred = mask_parts(saliency, part_assign)
        masked_gt = None
        if gt_mask is not None:
            gate = downsample_gate(gt_mask, part_assign.shape[-2:])
            masked_gt = mask_parts(gate, part_assign)
        return PartBundle(
            saliency=saliency,
            part_assign=part_assign,
            part_feats=part_feats,
            masked_parts_pred=masked_pred,
            masked_parts_gt=masked_gt,
        )

    def forward(
        self,
        target_appearance: torch.Tensor,
        reference_appearance: torch.Tensor,
        target_gt: torch.Tensor | None = None,
        reference_gt: torch.Tensor | None = None,
    ) -> tuple[MotionFeatures, PartBundle, PartBundle]:
        compressed_t = self.compress(target_appearance)
        compressed_r = self.compress(reference_appearance)
        bundle_t = self._bundle(compressed_t, target_gt)
        bundle_r = self._bundle(compressed_r, reference_gt)

        per_part = [
            attn(pt, pr)
            for attn, pt, pr in zip(self.attention, bundle_t.part_feats, bundle_r.part_feats)
        ]
        assembled = assemble_motion(per_part, bundle_t.masked_parts_pred)
        return MotionFeatures(per_part=per_part, assembled=assembled), bundle_t, bundle_r
