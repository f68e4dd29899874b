import torch

from partvid.fusion import MaskHead, SpatioTemporalFusion


def fusion_module(appearance=16, motion=8, seed=0):
    torch.manual_seed(seed)
    return SpatioTemporalFusion(appearance, motion).eval()


def test_shapes_at_default_widths():
    torch.manual_seed(0)
    fusion = SpatioTemporalFusion(256, 128).eval()
    a = torch.randn(1, 256, 120, 120)
    m = torch.randn(1, 128, 60, 60)
    with torch.no_grad():
        fused = fusion(a, m)
    assert fused.data.shape == (1, 256, 120, 120)


def test_zero_motion_degenerate():
    fusion = fusion_module()
    a = torch.randn(1, 16, 8, 8)
    with torch.no_grad():
        out = fusion(a, torch.zeros(1, 8, 4, 4))
        # expanded motion reduces to the expansion bias; the gate becomes a
        # bias-projection response times the appearance features
        bias_map = fusion.expand.bias.view(1, 16, 1, 1).expand(1, 16, 8, 8)
        expected_gate = fusion.gate_proj(bias_map) * a
        expected = fusion.head(a + bias_map + expected_gate)
    assert torch.isfinite(out.data).all()
    torch.testing.assert_close(out.data, expected)


def test_gate_branch_surgery_reduces_to_additive_path():
    fusion = fusion_module()
    with torch.no_grad():
        fusion.gate_proj.weight.zero_()
        fusion.gate_proj.bias.zero_()
    a = torch.randn(1, 16, 8, 8)
    m = torch.randn(1, 8, 4, 4)
    with torch.no_grad():
        out = fusion(a, m)
        expanded = fusion.expand(
            torch.nn.functional.interpolate(m, size=(8, 8), mode="bilinear",
                                            align_corners=False)
        )
        expected = fusion.head(a + expanded)
    torch.testing.assert_close(out.data, expected)


def test_gate_term_is_quadratic_in_inputs():
    # with all biases zeroed, doubling appearance and motion together scales
    # the multiplicative gate term by 4 while the additive terms scale by 2
    fusion = fusion_module()
    with torch.no_grad():
        fusion.expand.bias.zero_()
        fusion.gate_proj.bias.zero_()
    a = torch.randn(1, 16, 4, 4)
    m = torch.randn(1, 8, 2, 2)

    def gate_term(appearance, motion):
        up = torch.nn.functional.interpolate(motion, size=appearance.shape[-2:],
                                             mode="bilinear", align_corners=False)
        expanded = fusion.expand(up)
        return fusion.gate_proj(expanded) * appearance

    with torch.no_grad():
        single = gate_term(a, m)
        doubled = gate_term(2 * a, 2 * m)
        additive = fusion.expand(torch.nn.functional.interpolate(
            m, size=a.shape[-2:], mode="bilinear", align_corners=False))
        additive_doubled = fusion.expand(torch.nn.functional.interpolate(
            2 * m, size=a.shape[-2:], mode="bilinear", align_corners=False))
    torch.testing.assert_close(doubled, 4 * single, rtol=1e-5, atol=1e-5)
    torch.testing.assert_close(additive_doubled, 2 * additive, rtol=1e-5, atol=1e-5)


def test_mask_head_range_and_size():
    torch.manual_seed(0)
    head = MaskHead(16).eval()
    with torch.no_grad():
        prob = head(torch.randn(2, 16, 8, 8), (64, 64))
    assert prob.shape == (2, 1, 64, 64)
    assert ((prob > 0) & (prob < 1)).all()


def test_mask_head_480_contract():
    torch.manual_seed(0)
    head = MaskHead(16).eval()
    with torch.no_grad():
        prob = head(torch.randn(1, 16, 120, 120), (480, 480))
    assert prob.shape == (1, 1, 480, 480)
