"""Multiscale heatmap network: a shared fully-convolutional scorer applied at
geometrically spaced scales, sharpened by a local spatial softmax and
aggregated across scale by self-weighted pooling (no exponentiation over the
scale axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

EPS_POOL = 1e-6
SOFTMAX_WINDOW = 15


@dataclass
class ScaleSpaceSpec:
    """Discrete scale space: level c has scale factor sigma_min * ratio**c."""

    levels: int = 3
    sigma_min: float = 1.0
    ratio: float = 2.0

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.ratio <= 1.0:
            raise ValueError("ratio must be > 1")
        if self.sigma_min <= 0:
            raise ValueError("sigma_min must be > 0")

    def sigma(self, c):
        """Pixel scale of continuous level coordinate c (tensor-friendly)."""
        if isinstance(c, torch.Tensor):
            return self.sigma_min * torch.pow(torch.as_tensor(self.ratio, dtype=c.dtype), c)
        return self.sigma_min * self.ratio**c


@dataclass
class ScaleSpaceHeatmap:
    """Per-scale sharpened maps plus their scale-aggregated 2-D map."""

    per_scale: torch.Tensor  # (S, H, W), entries in (0, 1] for network output
    aggregated: torch.Tensor  # (H, W)
    eps: float = EPS_POOL

    @classmethod
    def from_per_scale(cls, per_scale: torch.Tensor, eps: float = EPS_POOL) -> "ScaleSpaceHeatmap":
        agg = softmax_pool_scales(per_scale.unsqueeze(0), eps)[0]
        return cls(per_scale=per_scale, aggregated=agg, eps=eps)

    @property
    def shape(self) -> tuple[int, int, int]:
        s, h, w = self.per_scale.shape
        return s, h, w


def _conv3(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, padding=1, padding_mode="reflect")


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv3(channels, channels)
        self.conv2 = _conv3(channels, channels)

    def forward(self, x):
        y = self.conv2(F.relu(self.conv1(x)))
        return F.relu(x + y)


class HeatmapNet(nn.Module):
    """Fully-convolutional scorer: input adapter, 4 residual blocks of two
    3x3/32 convolutions, single-channel head. The same weights run at every
    scale so no level is implicitly preferred.
    """

    def __init__(self, in_channels: int = 1, channels: int = 32, blocks: int = 4, out_channels: int = 1):
        super().__init__()
        self.adapter = _conv3(in_channels, channels)
        self.blocks = nn.Sequential(*[ResidualBlock(channels) for _ in range(blocks)])
        self.head = _conv3(channels, out_channels)

    def forward(self, x):
        return self.head(self.blocks(F.relu(self.adapter(x))))


def score_multiscale(net: HeatmapNet, images: torch.Tensor, spec: ScaleSpaceSpec) -> torch.Tensor:
    """Run the shared net at every level; returns raw score maps (B, S, H, W).

    Level s sees the image bilinearly downsampled by sigma_min * ratio**s and
    its single-channel response is bilinearly upsampled back to (H, W).
    """
    b, _, h, w = images.shape
    coarsest = spec.sigma(spec.levels - 1)
    if min(h, w) / coarsest < 8:
        raise ValueError(f"image {h}x{w} too small: coarsest level would be below 8x8")
    maps = []
    for s in range(spec.levels):
        sigma = spec.sigma(s)
        if sigma == 1.0:
            scaled = images
        else:
            hs, ws = max(8, round(h / sigma)), max(8, round(w / sigma))
            scaled = F.interpolate(images, size=(hs, ws), mode="bilinear", align_corners=False)
        response = net(scaled)
        if response.shape[-2:] != (h, w):
            response = F.interpolate(response, size=(h, w), mode="bilinear", align_corners=False)
        maps.append(response[:, 0])
    return torch.stack(maps, dim=1)


def local_spatial_softmax(raw: torch.Tensor, window: int = SOFTMAX_WINDOW) -> torch.Tensor:
    """Per-scale local softmax: exp(v) normalized by the summed exp over the
    window centered at each pixel. Border windows are completed by reflection
    so a constant input maps to 1/window**2 everywhere.
    """
    if window % 2 == 0:
        raise ValueError("window must be odd")
    b, s, h, w = raw.shape
    flat = raw.reshape(b * s, 1, h, w)
    # global shift per map keeps exp in range without changing the ratios
    shift = flat.amax(dim=(2, 3), keepdim=True)
    e = torch.exp(flat - shift)
    pad = window // 2
    padded = F.pad(e, (pad, pad, pad, pad), mode="reflect")
    kx = torch.ones(1, 1, 1, window, dtype=raw.dtype, device=raw.device)
    ky = torch.ones(1, 1, window, 1, dtype=raw.dtype, device=raw.device)
    denom = F.conv2d(F.conv2d(padded, kx), ky)
    # windows far from the global max can underflow to a 0/0 once the map
    # saturates; the smallest normal keeps them at exactly 0 instead
    return (e / (denom + torch.finfo(raw.dtype).tiny)).reshape(b, s, h, w)


def softmax_pool_scales(per_scale: torch.Tensor, eps: float = EPS_POOL) -> torch.Tensor:
    """Self-weighted scale aggregation: sum_s h_s * h_s / sum_s' (h_s' + eps).

    The per-scale maps are already exponentiated by the local softmax, so no
    further exponentiation is applied across scale.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    s = per_scale.shape[1]
    denom = per_scale.sum(dim=1) + s * eps
    return (per_scale * per_scale).sum(dim=1) / denom


def heatmap_forward(
    net: HeatmapNet,
    images: torch.Tensor,
    spec: ScaleSpaceSpec,
    window: int = SOFTMAX_WINDOW,
    eps: float = EPS_POOL,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Full pipeline: raw multiscale scores -> sharpened per-scale maps and
    the aggregated map. Returns (per_scale (B,S,H,W), aggregated (B,H,W)).
    """
    raw = score_multiscale(net, images, spec)
    per_scale = local_spatial_softmax(raw, window)
    return per_scale, softmax_pool_scales(per_scale, eps)
