import numpy as np
import pytest
import torch
import torch.nn.functional as F

from radnas.exceptions import ShapeError
from radnas.nn_core import (
    CoordinateAttention,
    Exchanger,
    PrimaryAuxFusion,
    Stem,
    attention_mid_channels,
    coordinate_attention,
    exchanger_forward,
    primary_aux_fuse,
    stem_forward,
)


def _zero_aux_bias(fusion: PrimaryAuxFusion) -> None:
    with torch.no_grad():
        fusion.aux_proj.bias.zero_()


class TestCoordinateAttention:
    def test_shape_preserved(self):
        attention = CoordinateAttention(12).eval()
        x = torch.randn(2, 12, 7, 5)
        assert coordinate_attention(x, attention).shape == x.shape

    def test_zero_gate_parameters_give_quarter_output(self):
        attention = CoordinateAttention(16).eval()
        with torch.no_grad():
            for conv in (attention.conv_h, attention.conv_w):
                conv.weight.zero_()
                conv.bias.zero_()
        x = torch.randn(3, 16, 6, 4)
        torch.testing.assert_close(attention(x), 0.25 * x)

    def test_gates_strictly_between_zero_and_one(self):
        attention = CoordinateAttention(8).eval()
        g_h, g_w = attention.gates(torch.randn(2, 8, 5, 9) * 10)
        assert g_h.shape == (2, 8, 5, 1) and g_w.shape == (2, 8, 1, 9)
        for gate in (g_h, g_w):
            assert torch.all(gate > 0) and torch.all(gate < 1)

    @pytest.mark.parametrize("channels,mid", [(4, 8), (64, 8), (128, 16), (256, 32)])
    def test_mid_channels(self, channels, mid):
        assert attention_mid_channels(channels) == mid


class TestPrimaryAuxFusion:
    def test_option2_with_zero_aux_is_identity(self):
        fusion = PrimaryAuxFusion(6, 3)
        _zero_aux_bias(fusion)
        primary = torch.randn(2, 6, 8, 8)
        out = primary_aux_fuse(primary, torch.zeros(2, 3, 4, 4), 2, fusion)
        torch.testing.assert_close(out, primary, rtol=0, atol=0)

    def test_option3_with_zero_lambda_is_identity(self):
        fusion = PrimaryAuxFusion(6, 3)
        primary = torch.randn(2, 6, 8, 8)
        out = primary_aux_fuse(primary, torch.randn(2, 3, 16, 16), 3, fusion)
        torch.testing.assert_close(out, primary, rtol=0, atol=0)

    def test_option1_with_zero_gamma_halves_the_aux_map(self):
        fusion = PrimaryAuxFusion(2, 1, options=(1,))
        with torch.no_grad():
            fusion.aux_proj.weight.copy_(torch.tensor([[[[2.0]]], [[[-1.0]]]]))
            fusion.aux_proj.bias.copy_(torch.tensor([0.5, 0.0]))
        primary = torch.ones(1, 2, 2, 2)
        aux = torch.tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        f_aux = torch.stack([2.0 * aux[0, 0] + 0.5, -aux[0, 0]])[None]
        expected = primary + 0.5 * f_aux
        torch.testing.assert_close(fusion(primary, aux), expected)
        torch.testing.assert_close(fusion.weighting(f_aux), torch.full((1, 2), 0.5))

    def test_aux_resized_bilinearly(self):
        fusion = PrimaryAuxFusion(4, 4, options=(2,))
        aux = torch.randn(1, 4, 3, 3)
        f_aux = fusion.aux_proj(aux, out_channels=4)
        expected = F.interpolate(f_aux, size=(6, 6), mode="bilinear", align_corners=False)
        torch.testing.assert_close(fusion.project(torch.zeros(1, 4, 6, 6), aux), expected)

    def test_scalars_follow_available_options(self):
        assert PrimaryAuxFusion(4, 4, options=(1,)).lam is None
        assert PrimaryAuxFusion(4, 4, options=(3,)).gamma is None
        only_add = PrimaryAuxFusion(4, 4, options=(2,))
        assert only_add.gamma is None and only_add.lam is None

    def test_unknown_option_rejected(self):
        fusion = PrimaryAuxFusion(4, 4, options=(2,))
        with pytest.raises(ValueError):
            fusion.set_option(1)
        with pytest.raises(ValueError):
            PrimaryAuxFusion(4, 4, options=(4,))


class TestExchanger:
    @pytest.mark.parametrize("mode", [1, 2])
    @pytest.mark.parametrize("option", [1, 2, 3])
    def test_zero_alpha_is_identity(self, mode, option):
        exchanger = Exchanger(8, 4, mode).eval()
        exchanger.fusion.set_option(option)
        heat, gray = torch.randn(2, 8, 4, 4), torch.randn(2, 4, 8, 8)
        heat_out, gray_out = exchanger_forward(heat, gray, exchanger)
        assert torch.equal(heat_out, heat) and torch.equal(gray_out, gray)

    def test_mode1_updates_heat_only(self):
        exchanger = Exchanger(8, 4, 1).eval()
        with torch.no_grad():
            exchanger.alpha.fill_(0.7)
        heat, gray = torch.randn(2, 8, 4, 4), torch.randn(2, 4, 16, 16)
        heat_out, gray_out = exchanger(heat, gray)
        assert heat_out.shape == heat.shape
        assert gray_out is gray
        assert not torch.allclose(heat_out, heat)

    def test_mode2_is_role_swapped_update(self):
        torch.manual_seed(5)
        exchanger = Exchanger(8, 4, 2).eval()
        with torch.no_grad():
            exchanger.alpha.fill_(0.3)
            exchanger.fusion.gamma.fill_(0.9)
        heat, gray = torch.randn(1, 8, 4, 4), torch.randn(1, 4, 8, 8)
        heat_out, gray_out = exchanger(heat, gray)
        expected = gray + 0.3 * exchanger.attention(exchanger.fusion(gray, heat))
        assert heat_out is heat
        torch.testing.assert_close(gray_out, expected)

    def test_batch_mismatch(self):
        with pytest.raises(ShapeError):
            Exchanger(4, 4, 1)(torch.randn(2, 4, 4, 4), torch.randn(3, 4, 4, 4))

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            Exchanger(4, 4, 3)


def _central_difference(loss_fn, param: torch.Tensor, step: float) -> torch.Tensor:
    grad = torch.zeros_like(param)
    flat = param.data.view(-1)
    for i in range(flat.numel()):
        original = flat[i].item()
        flat[i] = original + step
        plus = loss_fn().item()
        flat[i] = original - step
        minus = loss_fn().item()
        flat[i] = original
        grad.view(-1)[i] = (plus - minus) / (2 * step)
    return grad


class TestGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_adapter_parameters_match_finite_differences(self, seed):
        gen = np.random.default_rng(seed)
        torch.manual_seed(seed)
        heat_c, gray_c = (int(v) for v in gen.integers(2, 7, size=2))
        mode = int(gen.integers(1, 3))
        option = int(gen.integers(1, 4))
        exchanger = Exchanger(heat_c, gray_c, mode).double().eval()
        exchanger.fusion.set_option(option)
        with torch.no_grad():
            exchanger.alpha.fill_(float(gen.uniform(0.3, 1.2)))
            exchanger.fusion.gamma.fill_(float(gen.uniform(-1.0, 1.0)))
            exchanger.fusion.lam.fill_(float(gen.uniform(-1.0, 1.0)))
        heat = torch.randn(2, heat_c, 4, 4, dtype=torch.float64)
        gray = torch.randn(2, gray_c, 6, 6, dtype=torch.float64)
        out_shape = exchanger(heat, gray)[mode - 1].shape
        weights = torch.randn(out_shape, dtype=torch.float64)

        def loss():
            return (exchanger(heat, gray)[mode - 1] * weights).sum()

        params = {"alpha": exchanger.alpha, "aux_proj": exchanger.fusion.aux_proj.weight}
        if option == 1:
            params["gamma"] = exchanger.fusion.gamma
        if option == 3:
            params["lam"] = exchanger.fusion.lam
        exchanger.zero_grad()
        loss().backward()
        for name, param in params.items():
            analytic = param.grad.detach().clone()
            with torch.no_grad():
                numeric = _central_difference(loss, param, 1e-3)
            scale = max(float(numeric.abs().max()), 1e-8)
            rel = float((analytic - numeric).abs().max()) / scale
            assert rel <= 1e-3, f"{name}: relative error {rel:.2e}"


class TestStem:
    def test_quarter_scale_output(self):
        stem = Stem(1, (8, 16, 32)).eval()
        out = stem_forward(torch.randn(1, 1, 64, 64), stem)
        assert out.shape == (1, 32, 16, 16)
        assert stem.out_channels == 32

    def test_indivisible_input(self):
        with pytest.raises(ShapeError):
            Stem(1, (4, 4, 4))(torch.randn(1, 1, 30, 32))

    def test_needs_three_widths(self):
        with pytest.raises(ValueError):
            Stem(1, (4, 4))
