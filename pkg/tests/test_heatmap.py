"""Multiscale scoring, local spatial softmax, and scale pooling tests."""

import numpy as np
import pytest
import torch

from mist.heatmap import (
    HeatmapNet,
    ScaleSpaceHeatmap,
    ScaleSpaceSpec,
    heatmap_forward,
    local_spatial_softmax,
    score_multiscale,
    softmax_pool_scales,
)


def _net64(channels=8, blocks=2, in_channels=1):
    torch.manual_seed(7)
    return HeatmapNet(in_channels, channels=channels, blocks=blocks).double()


class TestLocalSpatialSoftmax:
    def test_constant_input_gives_uniform_value(self):
        raw = torch.full((1, 2, 40, 40), 3.7, dtype=torch.float64)
        out = local_spatial_softmax(raw, window=15)
        np.testing.assert_allclose(out.numpy(), 1.0 / 225.0, rtol=1e-12)

    def test_single_spike_saturates(self):
        raw = torch.zeros(1, 1, 41, 41, dtype=torch.float64)
        raw[0, 0, 20, 20] = 20.0
        out = local_spatial_softmax(raw, window=15)
        # direct formula: exp(20) / (exp(20) + 224) at the spike
        expected_peak = np.exp(20.0) / (np.exp(20.0) + 224.0)
        assert float(out[0, 0, 20, 20]) == pytest.approx(expected_peak, rel=1e-12)
        assert float(out[0, 0, 20, 21]) == pytest.approx(1.0 / (np.exp(20.0) + 224.0), rel=1e-9)

    def test_range(self, rng):
        raw = torch.from_numpy(rng.normal(0, 5, size=(2, 3, 32, 32)))
        out = local_spatial_softmax(raw, window=15)
        assert float(out.min()) > 0.0
        assert float(out.max()) <= 1.0

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            local_spatial_softmax(torch.zeros(1, 1, 8, 8), window=4)

    def test_matches_direct_formula_interior(self, rng):
        raw = torch.from_numpy(rng.normal(0, 1, size=(1, 1, 21, 21)))
        out = local_spatial_softmax(raw, window=5)
        v = raw[0, 0].numpy()
        y, x = 10, 12
        expected = np.exp(v[y, x]) / np.exp(v[y - 2 : y + 3, x - 2 : x + 3]).sum()
        assert float(out[0, 0, y, x]) == pytest.approx(expected, rel=1e-12)


class TestSoftmaxPoolScales:
    def test_single_active_level(self):
        w = 0.37
        per_scale = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
        per_scale[:, 1] = w
        out = softmax_pool_scales(per_scale, eps=1e-6)
        expected = w * w / (w + 3e-6)
        np.testing.assert_allclose(out.numpy(), expected, rtol=1e-12)

    def test_all_levels_equal(self):
        w = 0.21
        s = 4
        per_scale = torch.full((1, s, 3, 3), w, dtype=torch.float64)
        out = softmax_pool_scales(per_scale, eps=1e-6)
        expected = s * w * (w / (s * w + s * 1e-6))
        np.testing.assert_allclose(out.numpy(), expected, rtol=1e-12)

    def test_all_zero_guarded(self):
        per_scale = torch.zeros(1, 3, 5, 5)
        out = softmax_pool_scales(per_scale)
        assert torch.all(out == 0)

    def test_bounded_by_max_level(self, rng):
        per_scale = torch.from_numpy(rng.random((2, 3, 8, 8)))
        out = softmax_pool_scales(per_scale)
        assert torch.all(out >= 0)
        assert torch.all(out <= per_scale.amax(dim=1) + 1e-12)


class TestScoreMultiscale:
    def test_shape_contract(self):
        net = _net64()
        spec = ScaleSpaceSpec(levels=3)
        images = torch.zeros(1, 1, 128, 128, dtype=torch.float64)
        raw = score_multiscale(net, images, spec)
        assert raw.shape == (1, 3, 128, 128)

    @torch.no_grad()
    def test_constant_input_constant_identical_levels(self):
        net = _net64()
        spec = ScaleSpaceSpec(levels=3)
        raw = score_multiscale(net, torch.zeros(1, 1, 64, 64, dtype=torch.float64), spec)
        for s in range(3):
            level = raw[0, s]
            assert float(level.max() - level.min()) <= 1e-10
        assert float((raw[0, 0] - raw[0, 1]).abs().max()) <= 1e-10
        assert float((raw[0, 0] - raw[0, 2]).abs().max()) <= 1e-10

    def test_too_small_image_rejected(self):
        net = _net64()
        with pytest.raises(ValueError, match="too small"):
            score_multiscale(net, torch.zeros(1, 1, 16, 16, dtype=torch.float64), ScaleSpaceSpec(levels=3))

    @torch.no_grad()
    def test_translation_equivariance_interior(self, rng):
        net = _net64()
        spec = ScaleSpaceSpec(levels=1)
        shift = 8
        base = torch.from_numpy(rng.random((1, 1, 64, 64)))
        rolled = torch.roll(base, shifts=(shift, shift), dims=(2, 3))
        r0 = score_multiscale(net, base, spec)
        r1 = score_multiscale(net, rolled, spec)
        m = 24  # generous interior margin beyond the receptive field
        inner0 = r0[0, 0, m : 64 - m, m : 64 - m]
        inner1 = r1[0, 0, m + shift : 64 - m + shift, m + shift : 64 - m + shift]
        assert float((inner0 - inner1).abs().max()) <= 1e-5

    @torch.no_grad()
    def test_scale_covariance_on_blob(self):
        # level s of the downscaled input sees what level s+1 of the original
        # saw, so the argmax level shifts by exactly one inside the window of
        # comparable levels
        net = _net64()
        spec = ScaleSpaceSpec(levels=4)
        size = 128
        ys, xs = torch.meshgrid(
            torch.arange(size, dtype=torch.float64), torch.arange(size, dtype=torch.float64), indexing="ij"
        )
        for blob_sigma in (16.0, 24.0, 32.0):
            blob = torch.exp(-((xs - 64) ** 2 + (ys - 64) ** 2) / (2 * blob_sigma**2))
            raw = score_multiscale(net, blob[None, None], spec)
            profile = raw[0, :, 64, 64]

            half = torch.nn.functional.interpolate(blob[None, None], scale_factor=0.5, mode="bilinear", align_corners=False)
            padded = torch.zeros(1, 1, size, size, dtype=torch.float64)
            padded[:, :, 32:96, 32:96] = half
            raw2 = score_multiscale(net, padded, spec)
            profile2 = raw2[0, :, 64, 64]

            best_orig = int(profile[1:].argmax()) + 1  # within levels 1..S-1
            best_down = int(profile2[:-1].argmax())  # within levels 0..S-2
            assert best_down == best_orig - 1

    def test_gradient_wrt_weights_finite_difference(self):
        net = _net64(channels=4, blocks=1)
        spec = ScaleSpaceSpec(levels=2)
        image = torch.rand(1, 1, 16, 16, dtype=torch.float64)

        def aggregated_sum():
            per_scale, agg = heatmap_forward(net, image, spec, window=5)
            return (agg * weight_probe).sum()

        torch.manual_seed(3)
        weight_probe = torch.rand(1, 16, 16, dtype=torch.float64)
        loss = aggregated_sum()
        params = [p for p in net.parameters()]
        grads = torch.autograd.grad(loss, params)

        checked = 0
        for p, g in zip(params, grads):
            flat = p.detach().reshape(-1)
            gflat = g.reshape(-1)
            for idx in range(0, flat.numel(), max(1, flat.numel() // 3)):
                orig = float(flat[idx])
                step = 1e-5
                flat[idx] = orig + step
                fp = float(aggregated_sum())
                flat[idx] = orig - step
                fm = float(aggregated_sum())
                flat[idx] = orig
                fd = (fp - fm) / (2 * step)
                assert abs(float(gflat[idx]) - fd) <= 1e-3 * max(1.0, abs(fd))
                checked += 1
        assert checked >= 10


class TestHeatmapForward:
    def test_range_and_shapes(self, rng):
        net = _net64()
        spec = ScaleSpaceSpec(levels=3)
        images = torch.from_numpy(rng.random((2, 1, 64, 64)))
        per_scale, agg = heatmap_forward(net, images, spec)
        assert per_scale.shape == (2, 3, 64, 64)
        assert agg.shape == (2, 64, 64)
        assert float(per_scale.min()) > 0
        assert float(per_scale.max()) <= 1.0
        assert torch.all(agg >= 0)
        assert torch.all(agg <= per_scale.amax(dim=1) + 1e-12)

    def test_from_per_scale_recomputes(self, rng):
        per_scale = torch.from_numpy(rng.random((3, 8, 8)))
        hm = ScaleSpaceHeatmap.from_per_scale(per_scale)
        np.testing.assert_allclose(
            hm.aggregated.numpy(), softmax_pool_scales(per_scale[None])[0].numpy()
        )
