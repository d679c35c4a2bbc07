"""Non-differentiable patch selection (NMS + top-K + scale moment) and its
generative inverse: keypoints -> ideal sparse heatmap, built so that
re-extracting the generated map recovers the keypoints (spatial error at most
half a pixel from rounding, scale coordinate exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .heatmap import EPS_POOL, ScaleSpaceHeatmap, softmax_pool_scales

NMS_WINDOW = 15


@dataclass
class KeypointSet:
    """K selected points: pixel location, continuous scale-level coordinate,
    and score, ordered by descending score."""

    x: torch.Tensor  # (K,)
    y: torch.Tensor  # (K,)
    c: torch.Tensor  # (K,) in [0, S-1]
    score: torch.Tensor  # (K,), descending
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.x)

    def as_tensor(self) -> torch.Tensor:
        """(K, 3) stack of (x, y, c)."""
        return torch.stack([self.x, self.y, self.c], dim=1)

    @classmethod
    def from_tensor(cls, xyc: torch.Tensor, score: torch.Tensor | None = None, degenerate: bool = False) -> "KeypointSet":
        if score is None:
            score = torch.zeros(len(xyc), dtype=xyc.dtype)
        return cls(x=xyc[:, 0], y=xyc[:, 1], c=xyc[:, 2], score=score, degenerate=degenerate)


def nms_mask(aggregated: torch.Tensor, window: int = NMS_WINDOW) -> torch.Tensor:
    """True where a pixel equals the maximum of its window x window neighborhood."""
    if window % 2 == 0:
        raise ValueError("nms window must be odd")
    pooled = F.max_pool2d(aggregated.unsqueeze(0).unsqueeze(0), window, stride=1, padding=window // 2)
    return aggregated == pooled[0, 0]


@torch.no_grad()
def extract_top_k(heatmap: ScaleSpaceHeatmap, k: int, nms_window: int = NMS_WINDOW) -> KeypointSet:
    """Select the K best local maxima of the aggregated map.

    Scale is read off as the normalized first moment of the per-scale values
    at the selected pixel. If fewer than K maxima survive suppression, the
    set is padded with the highest remaining pixels and flagged degenerate.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s, h, w = heatmap.per_scale.shape
    agg = heatmap.aggregated
    mask = nms_mask(agg, nms_window)

    flat = agg.flatten()
    # deterministic order: score descending, then row, then column
    order = torch.argsort(flat, descending=True, stable=True)
    surviving = order[mask.flatten()[order]]
    degenerate = len(surviving) < k
    if degenerate:
        rest = order[~mask.flatten()[order]]
        surviving = torch.cat([surviving, rest])
    chosen = surviving[:k]

    ys = (chosen // w).to(agg.dtype)
    xs = (chosen % w).to(agg.dtype)
    weights = heatmap.per_scale[:, chosen // w, chosen % w].to(torch.float64)  # (S, K)
    levels = torch.arange(s, dtype=torch.float64)
    wsum = weights.sum(dim=0)
    moment = (weights * levels[:, None]).sum(dim=0)
    c = torch.where(wsum > 0, moment / wsum.clamp(min=1e-300), torch.zeros_like(wsum))
    return KeypointSet(x=xs, y=ys, c=c.to(agg.dtype), score=flat[chosen], degenerate=degenerate)


@torch.no_grad()
def generate_heatmap(
    kps: KeypointSet,
    shape: tuple[int, int, int],
    eps: float = EPS_POOL,
    dtype: torch.dtype = torch.float32,
    allow_overlap: bool = False,
) -> ScaleSpaceHeatmap:
    """Ideal sparse heatmap for a keypoint set: per keypoint, unit mass at the
    rounded pixel, split over the two neighboring scale levels so the scale
    center of mass equals c exactly.
    """
    s, h, w = shape
    per_scale = torch.zeros(s, h, w, dtype=dtype)
    seen: set[tuple[int, int]] = set()
    for i in range(len(kps)):
        xi = int(torch.round(kps.x[i]))
        yi = int(torch.round(kps.y[i]))
        if not (0 <= xi < w and 0 <= yi < h):
            raise ValueError(f"keypoint ({float(kps.x[i])}, {float(kps.y[i])}) outside {h}x{w} map")
        if (xi, yi) in seen and not allow_overlap:
            raise ValueError(f"keypoints collide at pixel ({xi}, {yi}); separation precondition violated")
        seen.add((xi, yi))
        c = float(kps.c[i])
        if not (-1e-6 <= c <= s - 1 + 1e-6):
            raise ValueError(f"scale coordinate {c} outside [0, {s - 1}]")
        c = min(max(c, 0.0), float(s - 1))
        lo = int(c)
        frac = c - lo
        per_scale[lo, yi, xi] += 1.0 - frac
        if frac > 0:
            per_scale[lo + 1, yi, xi] += frac
    return ScaleSpaceHeatmap.from_per_scale(per_scale, eps)
