import pytest
import torch

from partvid.encoder import PYRAMID_STRIDES, PyramidEncoder, expected_map_size
from partvid.losses import segmentation_loss

from oracles import ceil_div


def tiny_encoder():
    torch.manual_seed(0)
    return PyramidEncoder(backbone="resnet18", fpn_channels=32)


def test_fused_stride_four_at_480():
    torch.manual_seed(0)
    enc = PyramidEncoder(backbone="resnet50", fpn_channels=256).eval()
    with torch.no_grad():
        feats = enc(torch.randn(1, 3, 480, 480))
    assert feats.fused.stride == 4
    assert feats.fused.data.shape[-2:] == (ceil_div(480, 4), ceil_div(480, 4))
    assert feats.fused.data.shape[-2:] == (120, 120)


def test_pyramid_strides_and_shapes():
    enc = tiny_encoder().eval()
    size = 96
    with torch.no_grad():
        feats = enc(torch.randn(1, 3, size, size))
    assert [level.stride for level in feats.pyramid] == list(PYRAMID_STRIDES)
    for level in feats.pyramid:
        expected = expected_map_size(size, level.stride)
        assert level.data.shape[-2:] == (expected, expected)
    assert len(feats.aux_logits) == len(feats.pyramid)
    for aux, level in zip(feats.aux_logits, feats.pyramid):
        assert aux.stride == level.stride
        assert aux.data.shape[1] == 1


def test_forward_pure_in_eval_mode():
    enc = tiny_encoder().eval()
    x = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        a = enc(x)
        b = enc(x)
    assert torch.equal(a.fused.data, b.fused.data)


def test_zero_image_finite():
    enc = tiny_encoder().eval()
    with torch.no_grad():
        feats = enc(torch.zeros(1, 3, 64, 64))
    assert torch.isfinite(feats.fused.data).all()
    for aux in feats.aux_logits:
        assert torch.isfinite(aux.data).all()


def test_wrong_channel_count():
    enc = tiny_encoder()
    with pytest.raises(ValueError):
        enc(torch.randn(1, 4, 64, 64))


def test_siamese_weight_sharing():
    enc = tiny_encoder().eval()
    frame = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        feats_t, feats_r = enc.encode_pair(frame, frame.clone())
    assert torch.equal(feats_t.fused.data, feats_r.fused.data)
    for level_t, level_r in zip(feats_t.pyramid, feats_r.pyramid):
        assert torch.equal(level_t.data, level_r.data)


def test_siamese_swap_symmetry():
    enc = tiny_encoder().eval()
    a = torch.randn(1, 3, 64, 64)
    b = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        t1, r1 = enc.encode_pair(a, b)
        t2, r2 = enc.encode_pair(b, a)
    assert torch.equal(t1.fused.data, r2.fused.data)
    assert torch.equal(r1.fused.data, t2.fused.data)
    assert t1.fused.data.shape == r1.fused.data.shape
    assert not torch.equal(t1.fused.data, r1.fused.data)


def test_aux_logits_form_probability_maps():
    enc = tiny_encoder().eval()
    with torch.no_grad():
        feats = enc(torch.randn(1, 3, 64, 64))
    for aux in feats.aux_logits:
        up = torch.nn.functional.interpolate(aux.data, size=(64, 64), mode="bilinear",
                                             align_corners=False)
        probs = torch.sigmoid(up)
        assert ((probs > 0) & (probs < 1)).all()


def test_gradient_reaches_trunk_from_aux_loss():
    enc = tiny_encoder().train()
    frame = torch.randn(2, 3, 64, 64)
    mask = (torch.rand(2, 1, 64, 64) > 0.5).float()
    feats = enc(frame)
    loss = 0.0
    for aux in feats.aux_logits:
        up = torch.nn.functional.interpolate(aux.data, size=(64, 64), mode="bilinear",
                                             align_corners=False)
        loss = loss + segmentation_loss(torch.sigmoid(up), mask)
    loss.backward()
    trunk_grads = [p.grad for p in enc.trunk_parameters() if p.grad is not None]
    assert trunk_grads, "no gradient reached the trunk"
    total = sum(float(g.norm()) for g in trunk_grads)
    assert total > 0
