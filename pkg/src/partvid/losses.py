"""Loss stack: segmentation, saliency, and the self-supervised part losses.

The part losses act on gated soft part maps {X^k} (gate * assignment):
geometric concentration pulls each part's mass toward its own centroid,
semantic consistency ties each part's pooled frozen-extractor feature to a
learnable per-part basis vector, and area variance penalizes the spread of
the L2-normalized per-part soft areas so no part degenerates or takes over.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision

from .errors import ConfigError

EPS = 1e-6
ALL_PART_TERMS = ("geo", "sem", "area")


@dataclass
class LossReport:
    """One training step's loss components. grand_total is the weighted sum."""

    seg_final: float = 0.0
    seg_aux: float = 0.0
    saliency: float = 0.0
    geo: float = 0.0
    sem: float = 0.0
    area: float = 0.0
    part_total: float = 0.0
    grand_total: float = 0.0
    weights: dict[str, float] = field(default_factory=dict)
    skipped: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "seg_final": self.seg_final,
            "seg_aux": self.seg_aux,
            "saliency": self.saliency,
            "geo": self.geo,
            "sem": self.sem,
            "area": self.area,
            "part_total": self.part_total,
            "grand_total": self.grand_total,
            "weights": dict(self.weights),
            "skipped": list(self.skipped),
        }


def _flatten(pred: torch.Tensor, gt: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {tuple(pred.shape)} != gt shape {tuple(gt.shape)}")
    if pred.ndim <= 2:
        return pred.reshape(1, -1), gt.reshape(1, -1)
    return pred.reshape(pred.shape[0], -1), gt.reshape(gt.shape[0], -1)


def weighted_bce(pred: torch.Tensor, gt: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Class-balanced binary cross-entropy, weighted-mean normalized per image.

    Foreground pixels weigh |bg|/N and background pixels |fg|/N, so the scarcer
    class dominates; the weighted mean keeps a constant prediction's loss
    independent of the class balance. Images where one class is (numerically)
    empty fall back to the unweighted mean. Accepts soft ground truth.
    """
    pred2, gt2 = _flatten(pred, gt)
    gt2 = gt2.to(pred2.dtype)
    pred2 = pred2.clamp(eps, 1.0 - eps)
    bce = -(gt2 * torch.log(pred2) + (1.0 - gt2) * torch.log(1.0 - pred2))

    n = gt2.shape[1]
    fg = gt2.sum(dim=1, keepdim=True)
    bg = n - fg
    w_fg = bg / n
    w_bg = fg / n
    weights = gt2 * w_fg + (1.0 - gt2) * w_bg
    degenerate = (fg < eps) | (bg < eps)
    per_image = torch.where(
        degenerate.squeeze(1),
        bce.mean(dim=1),
        (weights * bce).sum(dim=1) / weights.sum(dim=1).clamp_min(eps),
    )
    return per_image.mean()


def l1_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean absolute deviation."""
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {tuple(pred.shape)} != gt shape {tuple(gt.shape)}")
    return F.l1_loss(pred, gt.to(pred.dtype))


def segmentation_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """weighted BCE + L1, the pairing used on every mask-valued prediction."""
    return weighted_bce(pred, gt) + l1_loss(pred, gt)


def _as_batched_parts(parts: torch.Tensor) -> torch.Tensor:
    if parts.ndim == 3:  # p x h x w
        return parts.unsqueeze(0)
    if parts.ndim == 4:  # B x p x h x w
        return parts
    raise ValueError(f"expected p x h x w or B x p x h x w part maps, got {tuple(parts.shape)}")


def _normalized_coords(h: int, w: int, dtype, device) -> tuple[torch.Tensor, torch.Tensor]:
    ys = torch.linspace(0.0, 1.0, h, dtype=dtype, device=device) if h > 1 else \
        torch.zeros(1, dtype=dtype, device=device)
    xs = torch.linspace(0.0, 1.0, w, dtype=dtype, device=device) if w > 1 else \
        torch.zeros(1, dtype=dtype, device=device)
    return ys.view(1, 1, h, 1), xs.view(1, 1, 1, w)


def geometric_concentration(parts: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Mass-weighted squared distance of each part to its own centroid.

    Coordinates are normalized to [0, 1]; each part's mass is normalized by its
    own soft area, so the loss is translation invariant and scale invariant in
    the map values.
    """
    x = _as_batched_parts(parts)
    b, p, h, w = x.shape
    ys, xs = _normalized_coords(h, w, x.dtype, x.device)
    mass = x.sum(dim=(2, 3)).clamp_min(eps)  # B x p
    cy = (x * ys).sum(dim=(2, 3)) / mass
    cx = (x * xs).sum(dim=(2, 3)) / mass
    dist2 = (ys - cy.view(b, p, 1, 1)) ** 2 + (xs - cx.view(b, p, 1, 1)) ** 2
    per_part = (x * dist2).sum(dim=(2, 3)) / mass
    return per_part.sum(dim=1).mean()


def area_variance(parts: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Population variance of the per-part soft areas after L2 normalization."""
    x = _as_batched_parts(parts)
    areas = x.sum(dim=(2, 3))  # B x p
    norm = areas.norm(dim=1, keepdim=True).clamp_min(eps)
    scaled = areas / norm
    return scaled.var(dim=1, unbiased=False).mean()


def semantic_consistency(parts: torch.Tensor, features: torch.Tensor,
                         basis: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Squared distance between part-pooled features and each part's basis vector.

    features: B x d x h x w from the frozen extractor (no gradient flows into it);
    basis: p x d learnable part representatives, trained jointly.
    """
    x = _as_batched_parts(parts)
    if features.ndim == 3:
        features = features.unsqueeze(0)
    b, p, h, w = x.shape
    if features.shape[0] != b or features.shape[-2:] != (h, w):
        raise ValueError(
            f"features shape {tuple(features.shape)} incompatible with parts {tuple(x.shape)}"
        )
    if basis.shape[0] != p:
        raise ValueError(f"basis has {basis.shape[0]} rows, expected {p}")
    mass = x.sum(dim=(2, 3)).clamp_min(eps)  # B x p
    pooled = torch.einsum("bphw,bdhw->bpd", x, features) / mass.unsqueeze(-1)
    return ((pooled - basis.unsqueeze(0)) ** 2).sum(dim=(1, 2)).mean()


def part_loss_terms(
    parts: torch.Tensor,
    features: torch.Tensor | None = None,
    basis: torch.Tensor | None = None,
    terms: tuple[str, ...] = ALL_PART_TERMS,
) -> dict[str, torch.Tensor]:
    """Each enabled self-supervision component for one gated part-map family."""
    out: dict[str, torch.Tensor] = {}
    if "geo" in terms:
        out["geo"] = geometric_concentration(parts)
    if "sem" in terms:
        if features is None or basis is None:
            raise ValueError("semantic consistency requires extractor features and a basis")
        out["sem"] = semantic_consistency(parts, features, basis)
    if "area" in terms:
        out["area"] = area_variance(parts)
    return out


def part_loss(
    parts: torch.Tensor,
    features: torch.Tensor | None = None,
    basis: torch.Tensor | None = None,
    terms: tuple[str, ...] = ALL_PART_TERMS,
    gate: torch.Tensor | None = None,
) -> torch.Tensor:
    """Sum of the enabled part components.

    `gate` is the map that produced the gated family and is accepted for
    call-site symmetry only; the part maps already embed it.
    """
    del gate
    values = part_loss_terms(parts, features, basis, terms)
    if not values:
        return torch.zeros((), dtype=parts.dtype if isinstance(parts, torch.Tensor) else None)
    return sum(values.values())


def total_part_loss(
    bundle,
    saliency: torch.Tensor | None = None,
    gt_gate: torch.Tensor | None = None,
    features: torch.Tensor | None = None,
    basis: torch.Tensor | None = None,
    terms: tuple[str, ...] = ALL_PART_TERMS,
) -> torch.Tensor:
    """Average of the part loss over the gt-gated and prediction-gated families."""
    if bundle.masked_parts_gt is None:
        raise ValueError("total part loss needs ground-truth-gated part maps (training mode)")
    gt_branch = part_loss(bundle.masked_parts_gt, features, basis, terms, gate=gt_gate)
    pred_branch = part_loss(bundle.masked_parts_pred, features, basis, terms, gate=saliency)
    return (gt_branch + pred_branch) / 2.0


def grand_total(components: dict[str, float], weights: dict[str, float],
                skipped: tuple[str, ...] = ()) -> LossReport:
    """Assemble the weighted sum and the full per-component report."""
    for name, value in weights.items():
        if value < 0:
            raise ConfigError(f"loss weight '{name}' must be >= 0, got {value}")

    def val(name: str) -> float:
        v = components.get(name, 0.0)
        return float(v)

    total = sum(weights[name] * val(name) for name in weights)
    return LossReport(
        seg_final=val("seg_final"),
        seg_aux=val("seg_aux"),
        saliency=val("saliency"),
        geo=val("geo"),
        sem=val("sem"),
        area=val("area"),
        part_total=val("part_total"),
        grand_total=float(total),
        weights={k: float(v) for k, v in weights.items()},
        skipped=tuple(skipped),
    )


class SemanticExtractor(nn.Module):
    """Frozen feature network producing stride-8 features for semantic consistency.

    Excluded from inference checkpoints; receives no gradient.
    """

    def __init__(self, name: str = "resnet18", pretrained: bool = False):
        super().__init__()
        if name not in ("resnet18", "resnet34"):
            raise ConfigError(f"unsupported semantic extractor '{name}'")
        trunk = getattr(torchvision.models, name)(weights="DEFAULT" if pretrained else None)
        self.features = nn.Sequential(
            trunk.conv1, trunk.bn1, trunk.relu, trunk.maxpool, trunk.layer1, trunk.layer2
        )
        self.extractor_id = f"{name}/stride8/{'pretrained' if pretrained else 'random'}"
        self.out_channels = 128
        for param in self.parameters():
            param.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):  # noqa: D102 - stays frozen regardless
        return super().train(False)

    @torch.no_grad()
    def forward(self, images: torch.Tensor, out_size: tuple[int, int] | None = None) -> torch.Tensor:
        feats = self.features(images)
        if out_size is not None and feats.shape[-2:] != tuple(out_size):
            feats = F.interpolate(feats, size=out_size, mode="bilinear", align_corners=False)
        return feats


class PartSemanticBasis(nn.Module):
    """Learnable per-part feature representatives for semantic consistency."""

    def __init__(self, parts: int, dim: int, extractor_id: str = ""):
        super().__init__()
        self.basis = nn.Parameter(torch.randn(parts, dim) * 0.01)
        self.extractor_id = extractor_id

    @property
    def parts(self) -> int:
        return self.basis.shape[0]
