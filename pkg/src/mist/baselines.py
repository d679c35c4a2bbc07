"""Self-contained comparison baselines.

Grid: the image is cut into fixed cells and each cell goes through the same
autoencoder as the main model; there is no notion of instances.

Channel-wise: the heatmap backbone emits K channels, one per instance slot,
and each channel's location is its spatial soft-argmax. Fully differentiable,
no scale estimate (patches sampled at unit scale).
"""

from __future__ import annotations

import torch
from torch import nn

from .extraction import KeypointSet
from .heatmap import HeatmapNet
from .sampling import PATCH_SIZE


def grid_cells(image: torch.Tensor, grid: int) -> torch.Tensor:
    """Split (C, H, W) into (grid*grid, C, cell, cell); cells must match the
    autoencoder input size."""
    c, h, w = image.shape
    if h % grid or w % grid:
        raise ValueError(f"canvas {h}x{w} not divisible into a {grid}x{grid} grid")
    cell_h, cell_w = h // grid, w // grid
    if cell_h != PATCH_SIZE or cell_w != PATCH_SIZE:
        raise ValueError(f"grid cells are {cell_h}x{cell_w}, autoencoder expects {PATCH_SIZE}x{PATCH_SIZE}")
    cells = image.reshape(c, grid, cell_h, grid, cell_w).permute(1, 3, 0, 2, 4)
    return cells.reshape(grid * grid, c, cell_h, cell_w)


def grid_assemble(cells: torch.Tensor, grid: int) -> torch.Tensor:
    """Inverse of grid_cells."""
    n, c, cell_h, cell_w = cells.shape
    out = cells.reshape(grid, grid, c, cell_h, cell_w).permute(2, 0, 3, 1, 4)
    return out.reshape(c, grid * cell_h, grid * cell_w)


def grid_reconstruct(image: torch.Tensor, autoencoder: nn.Module, grid: int = 3) -> tuple[torch.Tensor, torch.Tensor]:
    """Autoencode every fixed cell and reassemble; returns (mse loss, recon)."""
    cells = grid_cells(image, grid)
    recon = grid_assemble(autoencoder(cells), grid)
    return torch.mean((image - recon) ** 2), recon


class ChannelwiseNet(nn.Module):
    """Heatmap backbone with a K-channel head; channel k is dedicated to one
    instance slot."""

    def __init__(self, in_channels: int, k: int, channels: int = 32, blocks: int = 4):
        super().__init__()
        self.k = k
        self.net = HeatmapNet(in_channels, channels=channels, blocks=blocks, out_channels=k)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.net(images)  # (B, K, H, W)


def soft_argmax(channel: torch.Tensor, temperature: float = 1.0) -> tuple[torch.Tensor, torch.Tensor]:
    """Spatial expectation under softmax(temperature * map); returns (x, y)."""
    h, w = channel.shape
    p = torch.softmax((channel * temperature).flatten(), dim=0).reshape(h, w)
    xs = torch.arange(w, dtype=channel.dtype, device=channel.device)
    ys = torch.arange(h, dtype=channel.dtype, device=channel.device)
    return (p.sum(dim=0) * xs).sum(), (p.sum(dim=1) * ys).sum()


def channelwise_keypoints(maps: torch.Tensor, temperature: float = 1.0) -> KeypointSet:
    """One keypoint per channel via soft-argmax; scale fixed at level 0.

    Confidence is the channel's peak response.
    """
    k, h, w = maps.shape
    xs, ys, scores = [], [], []
    for i in range(k):
        x, y = soft_argmax(maps[i], temperature)
        xs.append(x)
        ys.append(y)
        scores.append(maps[i].max())
    x = torch.stack(xs)
    y = torch.stack(ys)
    return KeypointSet(x=x, y=y, c=torch.zeros_like(x), score=torch.stack(scores))
