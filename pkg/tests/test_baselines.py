"""Grid and channel-wise baseline tests."""

import numpy as np
import pytest
import torch
from torch import nn

from mist.baselines import ChannelwiseNet, channelwise_keypoints, grid_cells, grid_reconstruct, soft_argmax


class Identity(nn.Module):
    def forward(self, x):
        return x


class TestGridBaseline:
    def test_identity_stub_zero_loss(self):
        image = torch.rand(1, 96, 96, dtype=torch.float64)
        loss, recon = grid_reconstruct(image, Identity(), grid=3)
        assert float(loss) == 0.0
        np.testing.assert_array_equal(recon.numpy(), image.numpy())

    def test_cells_cover_image_without_overlap(self):
        image = torch.arange(96 * 96, dtype=torch.float64).reshape(1, 96, 96)
        cells = grid_cells(image, 3)
        assert cells.shape == (9, 1, 32, 32)
        np.testing.assert_array_equal(cells[0, 0].numpy(), image[0, :32, :32].numpy())
        np.testing.assert_array_equal(cells[5, 0].numpy(), image[0, 32:64, 64:96].numpy())

    def test_indivisible_canvas_rejected(self):
        with pytest.raises(ValueError, match="not divisible"):
            grid_cells(torch.zeros(1, 100, 100), 3)

    def test_wrong_cell_size_rejected(self):
        with pytest.raises(ValueError, match="expects"):
            grid_cells(torch.zeros(1, 96, 96), 2)  # 48px cells


class TestSoftArgmax:
    def test_symmetric_blob_centroid(self):
        ys, xs = torch.meshgrid(torch.arange(33.0), torch.arange(33.0), indexing="ij")
        blob = torch.exp(-((xs - 16) ** 2 + (ys - 16) ** 2) / 18.0) * 10
        x, y = soft_argmax(blob, temperature=1.0)
        assert float(x) == pytest.approx(16.0, abs=1e-4)
        assert float(y) == pytest.approx(16.0, abs=1e-4)

    def test_translation_covariance_integer_shifts(self):
        ys, xs = torch.meshgrid(torch.arange(64.0), torch.arange(64.0), indexing="ij")
        # peak high enough that the uniform background cannot bias the centroid
        blob = torch.exp(-((xs - 20) ** 2 + (ys - 24) ** 2) / 10.0) * 30
        x0, y0 = soft_argmax(blob)
        shifted = torch.roll(blob, shifts=(5, 7), dims=(0, 1))
        x1, y1 = soft_argmax(shifted)
        assert float(x1 - x0) == pytest.approx(7.0, abs=1e-3)
        assert float(y1 - y0) == pytest.approx(5.0, abs=1e-3)

    def test_temperature_sharpens(self):
        channel = torch.zeros(16, 16)
        channel[4, 4] = 1.0
        channel[12, 12] = 0.9
        x_soft, _ = soft_argmax(channel, temperature=1.0)
        x_sharp, _ = soft_argmax(channel, temperature=200.0)
        # sharp temperature collapses to the true argmax
        assert abs(float(x_sharp) - 4.0) < abs(float(x_soft) - 4.0)


class TestChannelwiseNet:
    def test_one_keypoint_per_channel(self):
        torch.manual_seed(0)
        net = ChannelwiseNet(1, k=5, channels=8, blocks=1)
        with torch.no_grad():
            maps = net(torch.rand(1, 1, 64, 64))
        assert maps.shape == (1, 5, 64, 64)
        kps = channelwise_keypoints(maps[0])
        assert len(kps) == 5
        assert torch.all(kps.c == 0)  # no scale estimate

    def test_keypoints_differentiable(self):
        torch.manual_seed(0)
        net = ChannelwiseNet(1, k=2, channels=8, blocks=1)
        maps = net(torch.rand(1, 1, 64, 64))
        kps = channelwise_keypoints(maps[0])
        (kps.x.sum() + kps.y.sum()).backward()
        grads = [p.grad for p in net.parameters() if p.grad is not None]
        assert grads and any(float(g.abs().sum()) > 0 for g in grads)
