"""Figure export: detection overlays, reconstruction panels, decoded patch
banks, precision-recall curves, and convergence plots. File-emitting only."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.patches as mpatches
import matplotlib.pyplot as plt
import numpy as np

from .metrics import Detection, convergence_report
from .records import Instance


def _imshow(ax, image: np.ndarray):
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    ax.imshow(img, cmap="gray" if img.ndim == 2 else None, vmin=0, vmax=1)
    ax.set_xticks([])
    ax.set_yticks([])


def _draw_boxes(ax, boxes, color, width=1.2):
    for (cx, cy, w, h) in boxes:
        ax.add_patch(
            mpatches.Rectangle((cx - w / 2, cy - h / 2), w, h, fill=False, edgecolor=color, linewidth=width)
        )


def save_detection_panel(
    image: np.ndarray,
    detections: list[Detection],
    path: Path | str,
    gt: list[Instance] | None = None,
    reconstruction: np.ndarray | None = None,
) -> None:
    """Input | detections | synthesis panel (synthesis column optional)."""
    cols = 2 + (reconstruction is not None)
    fig, axes = plt.subplots(1, cols, figsize=(3 * cols, 3))
    _imshow(axes[0], image)
    axes[0].set_title("input")
    _imshow(axes[1], image)
    if gt:
        _draw_boxes(axes[1], [g.box for g in gt], "lime")
    _draw_boxes(axes[1], [d.box for d in detections], "red")
    for d in detections:
        axes[1].text(d.box[0] - d.box[2] / 2, d.box[1] - d.box[3] / 2 - 1, str(d.label), color="red", fontsize=7)
    axes[1].set_title("detections")
    if reconstruction is not None:
        _imshow(axes[2], reconstruction)
        axes[2].set_title("synthesis")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_patch_bank(patches: np.ndarray, path: Path | str, title: str = "decoded patches") -> None:
    """Grid of decoded patches (K, C, P, P)."""
    k = len(patches)
    cols = int(np.ceil(np.sqrt(k)))
    rows = int(np.ceil(k / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(1.3 * cols, 1.3 * rows))
    axes = np.atleast_1d(axes).ravel()
    for i, ax in enumerate(axes):
        if i < k:
            _imshow(ax, np.transpose(patches[i], (1, 2, 0)))
        ax.axis("off")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_pr_curve(recall: np.ndarray, precision: np.ndarray, path: Path | str, label: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(recall, precision)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    if label:
        ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_convergence_plot(metrics_csv: Path | str, path: Path | str) -> None:
    report = convergence_report(metrics_csv)
    fig, axes = plt.subplots(1, len(report.columns), figsize=(5 * len(report.columns), 3.2))
    axes = np.atleast_1d(axes)
    for ax, (name, data) in zip(axes, report.columns.items()):
        ax.plot(data["smoothed"])
        ax.set_title(f"{name} ({'ok' if data['decreasing'] else 'not decreasing'})")
        ax.set_xlabel("logged step")
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
