"""Digit exemplar sources for the synthetic multi-digit scenes.

Two sources are supported:

* a self-contained, deterministically rendered bank (DejaVu/STIX fonts with
  random affine jitter, normalized to the usual 28x28 grayscale layout), and
* standard IDX image/label files, when a real handwritten-digit archive is
  available on disk.

Scene generators only see the ``DigitBank`` container, so the two are
interchangeable.
"""

from __future__ import annotations

import glob
import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw, ImageFont

DIGIT_SIZE = 28

_FONT_NAMES = [
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSans-Oblique.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSerif-Italic.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
    "STIXGeneral.ttf",
    "STIXGeneralBol.ttf",
]


@dataclass
class DigitBank:
    """A labeled set of 28x28 grayscale digit exemplars in [0, 1]."""

    images: np.ndarray  # (N, 28, 28) float32
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray) -> "DigitBank":
        return DigitBank(self.images[indices], self.labels[indices])

    def split(self, test_per_class: int, seed: int) -> tuple["DigitBank", "DigitBank"]:
        """Disjoint train/test exemplar split, per class."""
        rng = np.random.default_rng(seed)
        test_idx: list[int] = []
        train_idx: list[int] = []
        for c in range(10):
            idx = np.flatnonzero(self.labels == c)
            idx = rng.permutation(idx)
            test_idx.extend(idx[:test_per_class])
            train_idx.extend(idx[test_per_class:])
        return self.subset(np.array(sorted(train_idx))), self.subset(np.array(sorted(test_idx)))


def _font_paths() -> list[str]:
    import matplotlib

    font_dir = os.path.join(os.path.dirname(matplotlib.__file__), "mpl-data", "fonts", "ttf")
    paths = [os.path.join(font_dir, n) for n in _FONT_NAMES]
    paths = [p for p in paths if os.path.exists(p)]
    if not paths:  # fall back to anything bundled
        paths = sorted(glob.glob(os.path.join(font_dir, "*.ttf")))
    return paths


def _render_glyph(digit: int, rng: np.random.Generator, font_path: str) -> np.ndarray:
    """Render one digit on a large canvas and return its ink crop."""
    size = int(rng.integers(34, 46))
    font = ImageFont.truetype(font_path, size)
    canvas = Image.new("L", (96, 96), 0)
    draw = ImageDraw.Draw(canvas)
    draw.text((24, 16), str(digit), fill=255, font=font)
    angle = float(rng.uniform(-12.0, 12.0))
    shear = float(rng.uniform(-0.18, 0.18))
    canvas = canvas.transform(
        (96, 96),
        Image.AFFINE,
        (1.0, shear, -shear * 48, 0.0, 1.0, 0.0),
        resample=Image.BILINEAR,
    )
    canvas = canvas.rotate(angle, resample=Image.BILINEAR, center=(48, 48))
    arr = np.asarray(canvas, dtype=np.float32) / 255.0
    ys, xs = np.nonzero(arr > 0.05)
    if len(ys) == 0:
        raise RuntimeError(f"font {font_path!r} rendered no ink for digit {digit}")
    return arr[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _normalize_to_stamp(ink: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Fit the ink box into a 28x28 stamp, centered by center of mass."""
    target = int(rng.integers(18, 25))
    h, w = ink.shape
    scale = target / max(h, w)
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    img = Image.fromarray((ink * 255).astype(np.uint8)).resize((nw, nh), Image.BILINEAR)
    small = np.asarray(img, dtype=np.float32) / 255.0

    stamp = np.zeros((DIGIT_SIZE, DIGIT_SIZE), dtype=np.float32)
    total = small.sum()
    cy = (small.sum(axis=1) * np.arange(nh)).sum() / total
    cx = (small.sum(axis=0) * np.arange(nw)).sum() / total
    top = int(round(DIGIT_SIZE / 2 - 0.5 - cy))
    left = int(round(DIGIT_SIZE / 2 - 0.5 - cx))
    top = min(max(top, 0), DIGIT_SIZE - nh)
    left = min(max(left, 0), DIGIT_SIZE - nw)
    stamp[top : top + nh, left : left + nw] = small

    peak = float(rng.uniform(0.85, 1.0))
    m = stamp.max()
    if m > 0:
        stamp *= peak / m
    return stamp


def render_digit_bank(per_class: int, seed: int) -> DigitBank:
    """Deterministically render ``per_class`` exemplars of each digit 0-9."""
    fonts = _font_paths()
    images = np.zeros((per_class * 10, DIGIT_SIZE, DIGIT_SIZE), dtype=np.float32)
    labels = np.zeros(per_class * 10, dtype=np.int64)
    i = 0
    for digit in range(10):
        for k in range(per_class):
            rng = np.random.default_rng(np.random.SeedSequence((seed, digit, k)))
            font = fonts[int(rng.integers(len(fonts)))]
            ink = _render_glyph(digit, rng, font)
            images[i] = _normalize_to_stamp(ink, rng)
            labels[i] = digit
            i += 1
    return DigitBank(images, labels)


def _read_idx(path: str) -> np.ndarray:
    """Parse an IDX-format tensor file (magic, dims, big-endian payload)."""
    with open(path, "rb") as f:
        zero, dtype_code, ndim = struct.unpack(">HBB", f.read(4))
        if zero != 0:
            raise ValueError(f"{path}: bad IDX magic")
        if dtype_code != 0x08:
            raise ValueError(f"{path}: only unsigned-byte IDX payloads supported")
        dims = struct.unpack(">" + "I" * ndim, f.read(4 * ndim))
        data = np.frombuffer(f.read(), dtype=np.uint8)
    return data.reshape(dims)


def load_idx_bank(images_path: str, labels_path: str) -> DigitBank:
    """Load digit exemplars from IDX image/label files."""
    images = _read_idx(images_path).astype(np.float32) / 255.0
    labels = _read_idx(labels_path).astype(np.int64)
    if images.ndim != 3 or images.shape[1:] != (DIGIT_SIZE, DIGIT_SIZE):
        raise ValueError(f"expected (N, 28, 28) images, got {images.shape}")
    if len(labels) != len(images):
        raise ValueError("image/label count mismatch")
    return DigitBank(images, labels)
