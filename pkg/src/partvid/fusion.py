"""Fuse appearance and motion features, then predict the portrait mask."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class FusedFeatures:
    data: torch.Tensor  # B x C x H' x W' at the appearance-feature resolution


class SpatioTemporalFusion(nn.Module):
    """out = head(A + expand(up(M)) + gate(expand(up(M))) * A).

    Regions responsive in both appearance and motion are amplified by the
    multiplicative gate; the two additive paths keep each cue on its own.
    """

    def __init__(self, appearance_channels: int = 256, motion_channels: int = 128):
        super().__init__()
        self.expand = nn.Conv2d(motion_channels, appearance_channels, kernel_size=1)
        self.gate_proj = nn.Conv2d(appearance_channels, appearance_channels, kernel_size=1)
        self.head = nn.Sequential(
            nn.Conv2d(appearance_channels, appearance_channels, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(appearance_channels, appearance_channels, kernel_size=3, padding=1),
        )

    def forward(self, appearance: torch.Tensor, motion: torch.Tensor) -> FusedFeatures:
        upsampled = F.interpolate(motion, size=appearance.shape[-2:], mode="bilinear",
                                  align_corners=False)
        expanded = self.expand(upsampled)
        if expanded.shape != appearance.shape:
            raise RuntimeError(
                f"fusion shape mismatch: appearance {tuple(appearance.shape)} vs "
                f"expanded motion {tuple(expanded.shape)}"
            )
        gate = self.gate_proj(expanded) * appearance
        return FusedFeatures(self.head(appearance + expanded + gate))


class MaskHead(nn.Module):
    """3x3 conv + 1-channel 1x1, upsampled to the requested size, sigmoid output."""

    def __init__(self, in_channels: int = 256, hidden_channels: int = 64):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, hidden_channels, kernel_size=3, padding=1)
        self.out = nn.Conv2d(hidden_channels, 1, kernel_size=1)

    def logits(self, fused: torch.Tensor, out_size: tuple[int, int]) -> torch.Tensor:
        x = self.out(F.relu(self.conv(fused)))
        return F.interpolate(x, size=out_size, mode="bilinear", align_corners=False)

    def forward(self, fused: FusedFeatures | torch.Tensor,
                out_size: tuple[int, int]) -> torch.Tensor:
        data = fused.data if isinstance(fused, FusedFeatures) else fused
        return torch.sigmoid(self.logits(data, out_size))
