"""The full segmentation network: encoder -> part attention -> fusion -> mask head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .attention import InterFramePartAttention, MotionFeatures, PartBundle
from .config import TrainConfig
from .encoder import AppearanceFeatures, PyramidEncoder
from .fusion import MaskHead, SpatioTemporalFusion


@dataclass
class ModelOutputs:
    pred: torch.Tensor  # B x 1 x H x W probability map at input resolution
    appearance_t: AppearanceFeatures
    appearance_r: AppearanceFeatures
    motion: MotionFeatures | None
    bundle_t: PartBundle | None
    bundle_r: PartBundle | None


class PortraitSegNet(nn.Module):
    """Segments the foreground portrait of a target frame guided by a reference frame.

    With use_part_attention=False the mask head reads the appearance features
    directly (the no-attention/no-fusion baseline used in ablations).
    """

    def __init__(self, backbone: str = "resnet50", fpn_channels: int = 256,
                 compressed_channels: int = 128, parts: int = 5,
                 pretrained: bool = False, use_part_attention: bool = True):
        super().__init__()
        self.encoder = PyramidEncoder(backbone, fpn_channels, pretrained)
        self.use_part_attention = use_part_attention
        if use_part_attention:
            self.part_attention = InterFramePartAttention(fpn_channels, compressed_channels, parts)
            self.fusion = SpatioTemporalFusion(fpn_channels, compressed_channels)
        else:
            self.part_attention = None
            self.fusion = None
        self.mask_head = MaskHead(fpn_channels)

    @property
    def parts(self) -> int:
        return self.part_attention.parts if self.part_attention is not None else 0

    def forward(
        self,
        target: torch.Tensor,
        reference: torch.Tensor,
        target_gt: torch.Tensor | None = None,
        reference_gt: torch.Tensor | None = None,
    ) -> ModelOutputs:
        feats_t, feats_r = self.encoder.encode_pair(target, reference)
        out_size = target.shape[-2:]

        if self.part_attention is None:
            pred = self.mask_head(feats_t.fused.data, out_size)
            return ModelOutputs(pred, feats_t, feats_r, None, None, None)

        motion, bundle_t, bundle_r = self.part_attention(
            feats_t.fused.data, feats_r.fused.data, target_gt, reference_gt
        )
        fused = self.fusion(feats_t.fused.data, motion.assembled)
        pred = self.mask_head(fused, out_size)
        return ModelOutputs(pred, feats_t, feats_r, motion, bundle_t, bundle_r)


def build_model(cfg: TrainConfig) -> PortraitSegNet:
    return PortraitSegNet(
        backbone=cfg.backbone,
        fpn_channels=cfg.fpn_channels,
        compressed_channels=cfg.compressed_channels,
        parts=cfg.parts_p,
        pretrained=cfg.backbone_pretrained,
        use_part_attention=cfg.use_part_attention,
    )
