"""Independent brute-force oracles used by the test suite.

These deliberately avoid the library's own code paths: plain loops and
direct formula evaluation only.
"""

from __future__ import annotations

import numpy as np


def nms_topk_oracle(per_scale: np.ndarray, agg: np.ndarray, k: int, window: int):
    """Exhaustive NMS + top-K: scan every pixel, test window maximality,
    sort by (score desc, row, col), take K, pad from suppressed pixels.

    per_scale: (S, H, W); agg: (H, W). Returns (x, y, c, score, degenerate).
    """
    s, h, w = per_scale.shape
    half = window // 2
    survivors = []
    suppressed = []
    for yy in range(h):
        for xx in range(w):
            y0, y1 = max(0, yy - half), min(h, yy + half + 1)
            x0, x1 = max(0, xx - half), min(w, xx + half + 1)
            entry = (-agg[yy, xx], yy, xx)
            if agg[yy, xx] == agg[y0:y1, x0:x1].max():
                survivors.append(entry)
            else:
                suppressed.append(entry)
    survivors.sort()
    suppressed.sort()
    degenerate = len(survivors) < k
    chosen = (survivors + suppressed)[:k]
    xs, ys, cs, scores = [], [], [], []
    for neg_score, yy, xx in chosen:
        weights = per_scale[:, yy, xx].astype(np.float64)
        if weights.sum() > 0:
            c = float((weights * np.arange(s)).sum() / weights.sum())
        else:
            c = 0.0
        xs.append(float(xx))
        ys.append(float(yy))
        cs.append(c)
        scores.append(-neg_score)
    return np.array(xs), np.array(ys), np.array(cs), np.array(scores), degenerate


def bilinear_oracle(image: np.ndarray, x: float, y: float) -> np.ndarray:
    """Direct bilinear formula at one point with zero extension; image (C, H, W)."""
    c, h, w = image.shape
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0
    out = np.zeros(c)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            if 0 <= xi < w and 0 <= yi < h:
                out += image[:, yi, xi] * wx * wy
    return out


def gather_oracle(image: np.ndarray, x: float, y: float, side: float, patch: int) -> np.ndarray:
    """Loop-based window resampling matching the gather contract."""
    c = image.shape[0]
    out = np.zeros((c, patch, patch))
    for i in range(patch):
        for j in range(patch):
            gy = y + (i + 0.5 - patch / 2.0) * side / patch
            gx = x + (j + 0.5 - patch / 2.0) * side / patch
            out[:, i, j] = bilinear_oracle(image, gx, gy)
    return out


def central_difference(f, x0: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Gradient of scalar f at x0 by central differences, one coordinate at a time."""
    g = np.zeros_like(x0, dtype=np.float64)
    flat = x0.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x0)
        flat[i] = orig - step
        fm = f(x0)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


def iou_oracle(a, b) -> float:
    """Corner-based IoU of center-format boxes."""
    ax0, ay0 = a[0] - a[2] / 2, a[1] - a[3] / 2
    ax1, ay1 = a[0] + a[2] / 2, a[1] + a[3] / 2
    bx0, by0 = b[0] - b[2] / 2, b[1] - b[3] / 2
    bx1, by1 = b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    if inter == 0:
        return 0.0
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)
