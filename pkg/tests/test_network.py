import numpy as np
import torch

from partvid.config import TrainConfig
from partvid.metrics import jaccard
from partvid.network import build_model
from partvid.synthetic import render_figure_frame

from conftest import tiny_config


def test_no_attention_baseline_forward():
    cfg = tiny_config(use_part_attention=False)
    model = build_model(cfg).eval()
    t = torch.randn(1, 3, 64, 64)
    out = model(t, torch.randn(1, 3, 64, 64))
    assert out.pred.shape == (1, 1, 64, 64)
    assert out.motion is None and out.bundle_t is None
    assert model.part_attention is None and model.fusion is None


def test_config_round_trip_builds_equivalent_model():
    cfg = tiny_config(parts_p=2)
    rebuilt = TrainConfig.from_dict(cfg.to_dict())
    a = build_model(cfg)
    b = build_model(rebuilt)
    assert {k: tuple(v.shape) for k, v in a.state_dict().items()} == \
           {k: tuple(v.shape) for k, v in b.state_dict().items()}


def test_end_to_end_gradients_match_finite_differences():
    # double precision keeps the central-difference quotient clean
    torch.manual_seed(3)
    cfg = tiny_config()
    model = build_model(cfg).double().eval()
    frame = torch.randn(1, 3, 64, 64, dtype=torch.float64)
    reference = torch.randn(1, 3, 64, 64, dtype=torch.float64)
    weights = torch.randn(1, 1, 64, 64, dtype=torch.float64)

    def scalar(x):
        return (model(x, reference).pred * weights).sum()

    frame.requires_grad_(True)
    scalar(frame).backward()
    grad = frame.grad

    rng = np.random.default_rng(0)
    step = 1e-4  # float64 keeps the quotient clean at this step size
    checked = 0
    for _ in range(4):
        c = rng.integers(0, 3)
        i = rng.integers(0, 64)
        j = rng.integers(0, 64)
        with torch.no_grad():
            plus = frame.clone()
            plus[0, c, i, j] += step
            minus = frame.clone()
            minus[0, c, i, j] -= step
            fd = (scalar(plus) - scalar(minus)) / (2 * step)
        auto = grad[0, c, i, j]
        denom = max(abs(float(fd)), abs(float(auto)), 1e-8)
        assert abs(float(fd) - float(auto)) / denom < 1e-2
        checked += 1
    assert checked == 4


def test_overfit_single_pair_reaches_high_iou():
    # one fixed synthetic pair must be memorized quickly by a tiny model:
    # exercises the mask head and the saliency head end to end
    torch.manual_seed(1)
    background = np.full((64, 64, 3), 40, dtype=np.uint8)
    frame, mask = render_figure_frame(
        (64, 64), background, torso_center=(30, 36), torso_size=(28, 16),
        limb_angle=-0.8, torso_color=(230, 60, 60), limb_color=(240, 220, 70),
        limb_length=18, limb_width=7,
    )
    image = torch.from_numpy(frame.astype(np.float32).transpose(2, 0, 1) / 255.0).unsqueeze(0)
    gt = torch.from_numpy(mask.astype(np.float32)).view(1, 1, 64, 64)

    cfg = tiny_config(parts_p=2)
    model = build_model(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=2e-3)
    from partvid.losses import segmentation_loss
    from partvid.attention import downsample_gate

    model.train()
    for step in range(240):
        if step == 180:
            for group in optimizer.param_groups:
                group["lr"] = 4e-4
        out = model(image, image, gt, gt)
        gate = downsample_gate(gt, out.bundle_t.saliency.shape[-2:])
        loss = segmentation_loss(out.pred, gt) + segmentation_loss(out.bundle_t.saliency, gate)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    model.eval()
    with torch.no_grad():
        out = model(image, image)
    pred_mask = (out.pred[0, 0].numpy() > 0.5).astype(np.uint8)
    assert jaccard(pred_mask, mask) >= 0.95

    saliency = out.bundle_t.saliency[0, 0].numpy()
    small_gt = downsample_gate(gt, saliency.shape)[0, 0].numpy()
    sal_iou = jaccard(saliency > 0.5, small_gt > 0.5)
    assert sal_iou > 0.8
