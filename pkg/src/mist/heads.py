"""Per-patch task networks and losses.

Both heads share the same encoder family: 5 levels of 3 non-bottleneck
residual v1 blocks, channels doubling per 2x2 max-pool downsample, layer
normalization before each convolution. The autoencoder mirrors the encoder
with 2x2 transposed-convolution upsampling and a sigmoid output; the
classifier appends a dense layer on the bottleneck.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .extraction import KeypointSet
from .heatmap import ScaleSpaceSpec
from .sampling import BASE_WINDOW, PatchBatch, paste_sum

NUM_CLASSES = 10
LEVELS = 5
BLOCKS_PER_LEVEL = 3


def _norm(channels: int) -> nn.GroupNorm:
    # single-group GroupNorm == layer normalization over (C, H, W)
    return nn.GroupNorm(1, channels)


class NormConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, norm: bool = True):
        super().__init__()
        self.norm = _norm(in_ch) if norm else nn.Identity()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(self.norm(x))


class ResBlockV1(nn.Module):
    """Standard non-bottleneck residual block: two 3x3 convolutions."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = NormConv(channels, channels)
        self.conv2 = NormConv(channels, channels)

    def forward(self, x):
        y = self.conv2(F.relu(self.conv1(x)))
        return F.relu(x + y)


class PatchEncoder(nn.Module):
    """32x32xC -> bottleneck vector, downsampling at every level."""

    def __init__(self, in_channels: int, base: int = 32, bottleneck: int = 128):
        super().__init__()
        self.stem = nn.Conv2d(in_channels, base, 3, padding=1)  # raw pixels: no norm before the stem
        stages = []
        ch = base
        for level in range(LEVELS):
            stages.append(nn.Sequential(*[ResBlockV1(ch) for _ in range(BLOCKS_PER_LEVEL)]))
            stages.append(nn.MaxPool2d(2))
            if level < LEVELS - 1:
                stages.append(NormConv(ch, ch * 2))
                ch *= 2
        self.stages = nn.Sequential(*stages)
        self.to_latent = nn.Sequential(_norm(ch), nn.Conv2d(ch, bottleneck, 1))
        self.out_channels = ch

    def forward(self, x):
        return self.to_latent(self.stages(self.stem(x)))  # (B, bottleneck, 1, 1)


class PatchDecoder(nn.Module):
    """Bottleneck vector -> 32x32xC in (0, 1), mirroring the encoder."""

    def __init__(self, out_channels: int, base: int = 32, bottleneck: int = 128):
        super().__init__()
        top = base * 2 ** (LEVELS - 1)
        self.from_latent = nn.Sequential(_norm(bottleneck), nn.Conv2d(bottleneck, top, 1))
        stages = []
        ch = top
        for level in range(LEVELS):
            out_ch = ch if level == 0 else ch // 2
            stages.append(nn.Sequential(_norm(ch), nn.ConvTranspose2d(ch, out_ch, 2, stride=2)))
            stages.append(nn.Sequential(*[ResBlockV1(out_ch) for _ in range(BLOCKS_PER_LEVEL)]))
            ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.head = NormConv(ch, out_channels)

    def forward(self, z):
        return torch.sigmoid(self.head(self.stages(self.from_latent(z))))


class PatchAutoencoder(nn.Module):
    def __init__(self, channels: int = 1, base: int = 32, bottleneck: int = 128):
        super().__init__()
        self.encoder = PatchEncoder(channels, base, bottleneck)
        self.decoder = PatchDecoder(channels, base, bottleneck)

    def forward(self, x):
        return self.decoder(self.encoder(x))


class PatchClassifier(nn.Module):
    def __init__(self, channels: int = 1, base: int = 32, bottleneck: int = 128, classes: int = NUM_CLASSES):
        super().__init__()
        self.encoder = PatchEncoder(channels, base, bottleneck)
        self.fc = nn.Linear(bottleneck, classes)

    def forward(self, x):
        z = self.encoder(x).flatten(1)
        return self.fc(z)


@dataclass
class PredictionSet:
    """Per-patch class scores and their softmax probabilities."""

    scores: torch.Tensor  # (K, classes)
    probs: torch.Tensor  # (K, classes), rows sum to 1


def reconstruct_loss(
    image: torch.Tensor,
    patches: PatchBatch,
    autoencoder: nn.Module,
    spec: ScaleSpaceSpec,
    x: torch.Tensor | None = None,
    y: torch.Tensor | None = None,
    c: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Decode every patch, paste each onto a zero canvas, sum, and compare to
    the input by mean squared error. Returns (loss, reconstruction).

    Passing x/y/c overrides the paste coordinates (used when they are live
    optimization variables rather than the detached extraction output).
    """
    kps = patches.keypoints
    if x is None:
        x, y, c = kps.x, kps.y, kps.c
    decoded = autoencoder(patches.patches)
    recon = paste_sum(decoded, x, y, c, spec, image.shape[-2:], patches.base_window)
    loss = torch.mean((image - recon) ** 2)
    return loss, recon


def label_histogram(labels: list[int], classes: int = NUM_CLASSES, dtype=torch.float32) -> torch.Tensor:
    hist = torch.zeros(classes, dtype=dtype)
    for l in labels:
        hist[int(l)] += 1.0
    if labels:
        hist /= len(labels)
    return hist


def classify_loss(
    labels: list[int],
    patches: PatchBatch,
    classifier: nn.Module,
    allow_empty: bool = False,
) -> tuple[torch.Tensor, PredictionSet]:
    """Squared L2 distance between the mean one-hot label vector and the mean
    predicted probability vector (stabler than cross-entropy here).
    """
    if not labels and not allow_empty:
        raise ValueError("scene has no labeled instances and empty scenes are not allowed")
    scores = classifier(patches.patches)
    probs = torch.softmax(scores, dim=1)
    target = label_histogram(labels, scores.shape[1], dtype=scores.dtype)
    loss = torch.sum((target - probs.mean(dim=0)) ** 2)
    return loss, PredictionSet(scores=scores, probs=probs)
