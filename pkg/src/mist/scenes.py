"""Synthetic scene generators: perturbed-grid digits, scattered digits, and
procedural wavelet-noise textures.

All generators are pure functions of (config, seed): the same arguments
produce bit-identical record streams across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .digits import DIGIT_SIZE, DigitBank
from .records import Instance, SceneRecord


def poisson_disk(rng: np.random.Generator, width: float, height: float, radius: float, k: int = 30) -> np.ndarray:
    """Bridson blue-noise sampling: points in [0,w)x[0,h) with pairwise distance >= radius."""
    cell = radius / math.sqrt(2.0)
    gw, gh = int(math.ceil(width / cell)), int(math.ceil(height / cell))
    grid = -np.ones((gh, gw), dtype=np.int64)
    points: list[tuple[float, float]] = []
    active: list[int] = []

    def grid_idx(p):
        return int(p[1] / cell), int(p[0] / cell)

    def fits(p):
        gy, gx = grid_idx(p)
        for yy in range(max(0, gy - 2), min(gh, gy + 3)):
            for xx in range(max(0, gx - 2), min(gw, gx + 3)):
                j = grid[yy, xx]
                if j >= 0:
                    q = points[j]
                    if (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < radius * radius:
                        return False
        return True

    p0 = (float(rng.uniform(0, width)), float(rng.uniform(0, height)))
    points.append(p0)
    gy, gx = grid_idx(p0)
    grid[gy, gx] = 0
    active.append(0)

    while active:
        pick = int(rng.integers(len(active)))
        base = points[active[pick]]
        placed = False
        for _ in range(k):
            ang = rng.uniform(0, 2 * math.pi)
            rad = rng.uniform(radius, 2 * radius)
            cand = (base[0] + rad * math.cos(ang), base[1] + rad * math.sin(ang))
            if 0 <= cand[0] < width and 0 <= cand[1] < height and fits(cand):
                points.append(cand)
                gy, gx = grid_idx(cand)
                grid[gy, gx] = len(points) - 1
                active.append(len(points) - 1)
                placed = True
        if not placed:
            active.pop(pick)
    return np.array(points, dtype=np.float64)


def _stamp_digit(canvas: np.ndarray, stamp: np.ndarray, cx: float, cy: float) -> tuple[float, float]:
    """Composite a digit stamp (per-pixel max) at the rounded center; returns the actual center."""
    h, w = stamp.shape
    top = int(round(cy - (h - 1) / 2.0))
    left = int(round(cx - (w - 1) / 2.0))
    top = min(max(top, 0), canvas.shape[0] - h)
    left = min(max(left, 0), canvas.shape[1] - w)
    region = canvas[top : top + h, left : left + w]
    np.maximum(region, stamp, out=region)
    return left + (w - 1) / 2.0, top + (h - 1) / 2.0


def make_mnist_easy(
    bank: DigitBank,
    canvas: int,
    grid: int,
    n_records: int,
    seed: int,
    jitter_sigma: float | None = None,
) -> Iterator[SceneRecord]:
    """grid x grid digits in sorted label order on jittered cell centers.

    Default jitter is one eighth of the cell width.
    """
    if canvas < grid * DIGIT_SIZE:
        raise ValueError(f"canvas {canvas} cannot fit a {grid}x{grid} grid of {DIGIT_SIZE}px digits")
    cell = canvas / grid
    if jitter_sigma is None:
        jitter_sigma = cell / 8.0
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xEA5)))
    half = (DIGIT_SIZE - 1) / 2.0
    for _ in range(n_records):
        idx = rng.integers(len(bank), size=grid * grid)
        order = np.lexsort((idx, bank.labels[idx]))  # sorted by label, stable
        idx = idx[order]
        image = np.zeros((canvas, canvas), dtype=np.float32)
        instances = []
        exemplars = []
        for slot, ei in enumerate(idx):
            gy, gx = divmod(slot, grid)
            cx = (gx + 0.5) * cell + rng.normal(0.0, jitter_sigma)
            cy = (gy + 0.5) * cell + rng.normal(0.0, jitter_sigma)
            cx = min(max(cx, half), canvas - 1 - half)
            cy = min(max(cy, half), canvas - 1 - half)
            acx, acy = _stamp_digit(image, bank.images[ei], cx, cy)
            instances.append(Instance(box=(acx, acy, DIGIT_SIZE, DIGIT_SIZE), label=int(bank.labels[ei])))
            exemplars.append(int(ei))
        yield SceneRecord(image=image[..., None], instances=instances, meta={"exemplars": exemplars})


def make_mnist_hard(
    bank: DigitBank,
    canvas: int,
    count_range: Sequence[int],
    min_separation: float,
    n_records: int,
    seed: int,
    max_layout_attempts: int = 100,
) -> Iterator[SceneRecord]:
    """Scattered digits at blue-noise positions; identities i.i.d. with repetition."""
    if min_separation <= 0:
        raise ValueError("min_separation must be positive")
    counts = sorted(set(int(c) for c in count_range))
    half = (DIGIT_SIZE - 1) / 2.0
    span = canvas - DIGIT_SIZE
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA4D)))
    for _ in range(n_records):
        count = counts[int(rng.integers(len(counts)))]
        centers = np.zeros((0, 2))
        # stamps land on integer pixels, which moves each center by up to
        # 0.5 px per axis; pad the disk radius so separation holds afterwards
        radius = min_separation + math.sqrt(2.0) + 1e-6
        for _attempt in range(max_layout_attempts):
            pts = poisson_disk(rng, span, span, radius)
            if len(pts) >= count:
                pick = rng.permutation(len(pts))[:count]
                centers = pts[pick] + half
                break
        else:
            raise RuntimeError(
                f"could not place {count} points at separation {min_separation} "
                f"on a {canvas}px canvas in {max_layout_attempts} layouts"
            )
        image = np.zeros((canvas, canvas), dtype=np.float32)
        instances = []
        exemplars = []
        for cx, cy in centers:
            ei = int(rng.integers(len(bank)))
            acx, acy = _stamp_digit(image, bank.images[ei], cx, cy)
            instances.append(Instance(box=(acx, acy, DIGIT_SIZE, DIGIT_SIZE), label=int(bank.labels[ei])))
            exemplars.append(ei)
        yield SceneRecord(image=image[..., None], instances=instances, meta={"exemplars": exemplars})


@dataclass
class GaborSpec:
    """Oriented wavelet kernel parameters for the texture generator."""

    envelope_width: float = 4.0  # Gaussian envelope sigma, pixels
    frequency: float = 0.1  # cycles per pixel
    orientation: float = math.pi / 4  # radians
    support: int = 21  # odd kernel side, pixels
    weights: tuple[float, ...] = (1.0,)  # impulse weights, drawn uniformly

    def __post_init__(self) -> None:
        if self.support < 3 or self.support % 2 == 0:
            raise ValueError("kernel support must be odd and >= 3")
        if self.frequency <= 0 or self.envelope_width <= 0:
            raise ValueError("frequency and envelope width must be positive")

    def kernel(self) -> np.ndarray:
        half = self.support // 2
        y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
        envelope = np.exp(-(x**2 + y**2) / (2.0 * self.envelope_width**2))
        carrier = np.cos(2.0 * math.pi * self.frequency * (x * math.cos(self.orientation) + y * math.sin(self.orientation)))
        return (envelope * carrier).astype(np.float32)


def make_gabor(
    spec: GaborSpec,
    canvas: int,
    impulses_per_image: int,
    n_records: int,
    seed: int,
    gain: float = 1.0,
    offset: float = 0.0,
) -> Iterator[SceneRecord]:
    """Sparse impulses convolved with the oriented wavelet, rescaled and clamped to [0, 1]."""
    if impulses_per_image < 1:
        raise ValueError("impulses_per_image must be >= 1")
    kernel = spec.kernel()
    half = spec.support // 2
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6AB)))
    for _ in range(n_records):
        impulse_map = np.zeros((canvas, canvas), dtype=np.float32)
        instances = []
        for _k in range(impulses_per_image):
            px = int(rng.integers(half, canvas - half))
            py = int(rng.integers(half, canvas - half))
            w = float(spec.weights[int(rng.integers(len(spec.weights)))])
            impulse_map[py, px] += w
            instances.append(Instance(box=(float(px), float(py), spec.support, spec.support), label=0))
        image = fftconvolve(impulse_map, kernel, mode="same")
        image = np.clip(image * gain + offset, 0.0, 1.0).astype(np.float32)
        yield SceneRecord(image=image[..., None], instances=instances, meta={})
