"""Differentiable patch sampling: bilinear gather of fixed-size patches from
scale-dependent square windows, and the generalized inverse paste that places
a patch back onto a zero canvas. Both are linear in the image/patch values
and differentiable in the keypoint parameters (x, y, scale coordinate).

Out-of-bounds reads are zero-extended; pastes write only inside the canvas.
Pixel (row i, col j) has center (x=j, y=i).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .extraction import KeypointSet
from .heatmap import ScaleSpaceSpec

PATCH_SIZE = 32
BASE_WINDOW = 32.0


@dataclass
class PatchBatch:
    """K patches resampled from one image, with their source keypoints."""

    patches: torch.Tensor  # (K, C, P, P)
    keypoints: KeypointSet
    base_window: float = BASE_WINDOW


def bilinear_sample(image: torch.Tensor, xs: torch.Tensor, ys: torch.Tensor) -> torch.Tensor:
    """Sample image (C, H, W) at fractional coordinates; zero outside bounds.

    xs/ys share an arbitrary shape ``s``; the result is (C, *s).
    """
    c, h, w = image.shape
    shape = xs.shape
    xs = xs.reshape(-1)
    ys = ys.reshape(-1)

    x0 = torch.floor(xs)
    y0 = torch.floor(ys)
    fx = xs - x0
    fy = ys - y0

    out = torch.zeros(c, xs.numel(), dtype=image.dtype, device=image.device)
    flat = image.reshape(c, -1)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0.long() + dx
            yi = y0.long() + dy
            wgt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1))
            out = out + flat[:, idx] * (wgt * valid).unsqueeze(0)
    return out.reshape(c, *shape)


def _grid_offsets(patch_size: int, dtype: torch.dtype, device=None) -> torch.Tensor:
    """Sample offsets of a patch_size grid spanning a unit-side window."""
    i = torch.arange(patch_size, dtype=dtype, device=device)
    return (i + 0.5 - patch_size / 2.0) / patch_size


def window_sides(c: torch.Tensor, spec: ScaleSpaceSpec, base_window: float = BASE_WINDOW) -> torch.Tensor:
    """Image-space side of the sampling window at scale coordinate c."""
    return base_window * spec.sigma(c)


def gather(
    image: torch.Tensor,
    x: torch.Tensor,
    y: torch.Tensor,
    c: torch.Tensor,
    spec: ScaleSpaceSpec,
    base_window: float = BASE_WINDOW,
    patch_size: int = PATCH_SIZE,
) -> torch.Tensor:
    """Resample K square windows centered at (x_k, y_k) with side
    base_window * sigma(c_k) onto patch_size x patch_size grids.

    image: (C, H, W); x, y, c: (K,). Returns (K, C, P, P).
    """
    sides = window_sides(c, spec, base_window)  # (K,)
    offs = _grid_offsets(patch_size, image.dtype, image.device)
    gx = x[:, None, None] + sides[:, None, None] * offs[None, None, :]
    gy = y[:, None, None] + sides[:, None, None] * offs[None, :, None]
    gx = gx.expand(-1, patch_size, -1)
    gy = gy.expand(-1, -1, patch_size)
    sampled = bilinear_sample(image, gx, gy)  # (C, K, P, P)
    return sampled.permute(1, 0, 2, 3)


def gather_patches(
    image: torch.Tensor,
    kps: KeypointSet,
    spec: ScaleSpaceSpec,
    base_window: float = BASE_WINDOW,
    patch_size: int = PATCH_SIZE,
) -> PatchBatch:
    patches = gather(image, kps.x.to(image.dtype), kps.y.to(image.dtype), kps.c.to(image.dtype), spec, base_window, patch_size)
    return PatchBatch(patches=patches, keypoints=kps, base_window=base_window)


def paste(
    patch: torch.Tensor,
    x: torch.Tensor,
    y: torch.Tensor,
    c: torch.Tensor,
    spec: ScaleSpaceSpec,
    canvas_shape: tuple[int, int],
    base_window: float = BASE_WINDOW,
) -> torch.Tensor:
    """Inverse warp of gather: start from zeros and place the patch in the
    keypoint's window. patch: (C, P, P); returns (C, H, W).

    For each canvas pixel inside the window the patch is sampled bilinearly
    at the inverse-mapped coordinate; pixels outside stay zero.
    """
    ch, p, p2 = patch.shape
    if p != p2:
        raise ValueError("patch must be square")
    h, w = canvas_shape
    side = window_sides(c, spec, base_window)
    half = float(side.detach()) / 2.0 + 1.0
    x0 = max(0, int(torch.floor(x.detach() - half)))
    x1 = min(w, int(torch.ceil(x.detach() + half)) + 1)
    y0 = max(0, int(torch.floor(y.detach() - half)))
    y1 = min(h, int(torch.ceil(y.detach() + half)) + 1)
    canvas = torch.zeros(ch, h, w, dtype=patch.dtype, device=patch.device)
    if x0 >= x1 or y0 >= y1:
        return canvas
    xs = torch.arange(x0, x1, dtype=patch.dtype, device=patch.device)
    ys = torch.arange(y0, y1, dtype=patch.dtype, device=patch.device)
    # inverse of: canvas_x = x + side * (u + 0.5 - P/2) / P
    u = (xs[None, :] - x) * (p / side) + p / 2.0 - 0.5
    v = (ys[:, None] - y) * (p / side) + p / 2.0 - 0.5
    u = u.expand(len(ys), -1)
    v = v.expand(-1, len(xs))
    values = bilinear_sample(patch, u, v)  # (C, y1-y0, x1-x0)
    canvas[:, y0:y1, x0:x1] = values
    return canvas


def paste_sum(
    patches: torch.Tensor,
    x: torch.Tensor,
    y: torch.Tensor,
    c: torch.Tensor,
    spec: ScaleSpaceSpec,
    canvas_shape: tuple[int, int],
    base_window: float = BASE_WINDOW,
) -> torch.Tensor:
    """Sum of per-keypoint pastes: the reconstruction canvas for K patches."""
    out = torch.zeros(patches.shape[1], *canvas_shape, dtype=patches.dtype, device=patches.device)
    for k in range(len(patches)):
        out = out + paste(patches[k], x[k], y[k], c[k], spec, canvas_shape, base_window)
    return out


def gather_vjp(
    image: torch.Tensor,
    x: torch.Tensor,
    y: torch.Tensor,
    c: torch.Tensor,
    spec: ScaleSpaceSpec,
    upstream: torch.Tensor,
    base_window: float = BASE_WINDOW,
    patch_size: int = PATCH_SIZE,
) -> dict[str, torch.Tensor]:
    """Exact vector-Jacobian product of gather for an upstream patch gradient.

    Returns gradients for the image (the adjoint scatter of ``upstream``) and
    for the keypoint parameters x, y, c.
    """
    image = image.detach().requires_grad_(True)
    x = x.detach().requires_grad_(True)
    y = y.detach().requires_grad_(True)
    c = c.detach().requires_grad_(True)
    patches = gather(image, x, y, c, spec, base_window, patch_size)
    grads = torch.autograd.grad(patches, (image, x, y, c), grad_outputs=upstream, allow_unused=False)
    return {"image": grads[0], "x": grads[1], "y": grads[2], "c": grads[3]}
