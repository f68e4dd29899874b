"""Weight-shared convolutional encoder with top-down pyramid fusion.

The same module encodes target and reference frames (called once per frame),
so equal inputs produce bitwise-equal features in eval mode. Each pyramid
level additionally carries a single-channel deep-supervision head.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision

from .errors import ConfigError

BACKBONE_CHANNELS = {
    "resnet18": (64, 128, 256, 512),
    "resnet34": (64, 128, 256, 512),
    "resnet50": (256, 512, 1024, 2048),
}

PYRAMID_STRIDES = (32, 16, 8, 4)  # deep to shallow
FUSED_STRIDE = 4


@dataclass
class FeatureMap:
    data: torch.Tensor  # B x C x H' x W'
    stride: int


@dataclass
class AppearanceFeatures:
    fused: FeatureMap  # stride-4 map consumed downstream
    pyramid: list[FeatureMap]  # deep to shallow (strides 32, 16, 8, 4)
    aux_logits: list[FeatureMap]  # one single-channel head per pyramid level


def _make_trunk(name: str, pretrained: bool) -> nn.Module:
    if name not in BACKBONE_CHANNELS:
        raise ConfigError(f"unsupported backbone '{name}'")
    weights = "DEFAULT" if pretrained else None
    return getattr(torchvision.models, name)(weights=weights)


class PyramidEncoder(nn.Module):
    """Residual trunk + lateral/top-down fusion, fused output at stride 4."""

    def __init__(self, backbone: str = "resnet50", fpn_channels: int = 256,
                 pretrained: bool = False):
        super().__init__()
        trunk = _make_trunk(backbone, pretrained)
        self.backbone_name = backbone
        self.stem = nn.Sequential(trunk.conv1, trunk.bn1, trunk.relu, trunk.maxpool)
        self.stages = nn.ModuleList([trunk.layer1, trunk.layer2, trunk.layer3, trunk.layer4])
        channels = BACKBONE_CHANNELS[backbone]
        # laterals/smooth/aux ordered deep to shallow to match the pyramid
        self.laterals = nn.ModuleList(
            [nn.Conv2d(c, fpn_channels, kernel_size=1) for c in reversed(channels)]
        )
        self.smooth = nn.ModuleList(
            [nn.Conv2d(fpn_channels, fpn_channels, kernel_size=3, padding=1) for _ in channels]
        )
        self.aux_heads = nn.ModuleList(
            [nn.Conv2d(fpn_channels, 1, kernel_size=1) for _ in channels]
        )
        self.fpn_channels = fpn_channels

    def trunk_parameters(self):
        """Parameters of the residual trunk (the 'backbone' optimizer group)."""
        yield from self.stem.parameters()
        for stage in self.stages:
            yield from stage.parameters()

    def head_parameters(self):
        """Lateral, smoothing and deep-supervision parameters."""
        for module in (self.laterals, self.smooth, self.aux_heads):
            yield from module.parameters()

    def forward(self, frame: torch.Tensor) -> AppearanceFeatures:
        if frame.ndim != 4 or frame.shape[1] != 3:
            raise ValueError(f"expected B x 3 x H x W input, got shape {tuple(frame.shape)}")
        x = self.stem(frame)
        skips = []
        for stage in self.stages:
            x = stage(x)
            skips.append(x)  # strides 4, 8, 16, 32

        merged = []
        top = None
        for lateral, skip in zip(self.laterals, reversed(skips)):
            lat = lateral(skip)
            if top is not None:
                lat = lat + F.interpolate(top, size=lat.shape[-2:], mode="bilinear",
                                          align_corners=False)
            top = lat
            merged.append(lat)

        pyramid = [
            FeatureMap(conv(feat), stride)
            for conv, feat, stride in zip(self.smooth, merged, PYRAMID_STRIDES)
        ]
        aux = [
            FeatureMap(head(level.data), level.stride)
            for head, level in zip(self.aux_heads, pyramid)
        ]
        return AppearanceFeatures(fused=pyramid[-1], pyramid=pyramid, aux_logits=aux)

    def encode_pair(self, target: torch.Tensor,
                    reference: torch.Tensor) -> tuple[AppearanceFeatures, AppearanceFeatures]:
        """Encode both frames through the single shared parameter set."""
        return self.forward(target), self.forward(reference)


def expected_map_size(input_size: int, stride: int) -> int:
    """Spatial extent of a feature map at the given stride (ceil division)."""
    return -(-input_size // stride)
