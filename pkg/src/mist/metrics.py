"""Quantitative evaluation: reconstruction error, IoU box matching,
instance-level detection/classification rates, average precision, and
convergence diagnostics over training logs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import Instance

Box = tuple[float, float, float, float]  # (cx, cy, w, h)


def rmse(image: np.ndarray, reconstruction: np.ndarray) -> float:
    """Root mean squared per-pixel error."""
    if image.shape != reconstruction.shape:
        raise ValueError(f"shape mismatch: {image.shape} vs {reconstruction.shape}")
    return float(np.sqrt(np.mean((np.asarray(image, dtype=np.float64) - reconstruction) ** 2)))


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of axis-aligned center-format boxes."""
    ax0, ax1 = a[0] - a[2] / 2, a[0] + a[2] / 2
    ay0, ay1 = a[1] - a[3] / 2, a[1] + a[3] / 2
    bx0, bx1 = b[0] - b[2] / 2, b[0] + b[2] / 2
    by0, by1 = b[1] - b[3] / 2, b[1] + b[3] / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union


@dataclass
class Detection:
    box: Box  # square side = base_window * sigma(c)
    label: int
    confidence: float


@dataclass
class MatchResult:
    """Per-ground-truth-instance outcome flags (the three table rows)."""

    detected: list[bool]  # matched by any detection at IoU > threshold
    classified: list[bool]  # label covered by some detection (localization ignored)
    both: list[bool]  # matched at IoU > threshold by a correctly-labeled detection
    matches: list[tuple[int, int, float]]  # (det_idx, gt_idx, iou)


def match_detections(
    gt: list[Instance],
    detections: list[Detection],
    iou_threshold: float = 0.5,
    method: str = "greedy",
) -> MatchResult:
    """One-to-one matching of detections to ground truth boxes.

    Greedy: in descending confidence order each detection takes the unmatched
    ground-truth box of highest IoU, if that IoU exceeds the threshold.
    Optimal: maximum-total-IoU assignment over pairs above the threshold.
    Duplicate detections of one box stay unmatched (false positives).
    """
    n = len(gt)
    detected = [False] * n
    both = [False] * n
    matches: list[tuple[int, int, float]] = []
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)

    if method == "greedy":
        taken = [False] * n
        for di in order:
            best_iou, best_gi = iou_threshold, -1
            for gi in range(n):
                if taken[gi]:
                    continue
                iou = box_iou(detections[di].box, gt[gi].box)
                if iou > best_iou:
                    best_iou, best_gi = iou, gi
            if best_gi >= 0:
                taken[best_gi] = True
                detected[best_gi] = True
                both[best_gi] = detections[di].label == gt[best_gi].label
                matches.append((di, best_gi, best_iou))
    elif method == "optimal":
        from scipy.optimize import linear_sum_assignment

        if n and detections:
            iou_mat = np.array([[box_iou(d.box, g.box) for g in gt] for d in detections])
            cost = -np.where(iou_mat > iou_threshold, iou_mat, -1e-6)
            rows, cols = linear_sum_assignment(cost)
            for di, gi in zip(rows, cols):
                if iou_mat[di, gi] > iou_threshold:
                    detected[gi] = True
                    both[gi] = detections[di].label == gt[gi].label
                    matches.append((int(di), int(gi), float(iou_mat[di, gi])))
    else:
        raise ValueError(f"unknown matching method {method!r}")

    # classification flag: multiset containment of labels, localization ignored
    classified = [False] * n
    remaining = [d.label for d in detections]
    for gi in range(n):
        if gt[gi].label in remaining:
            classified[gi] = True
            remaining.remove(gt[gi].label)
    return MatchResult(detected=detected, classified=classified, both=both, matches=matches)


@dataclass
class DetectionRates:
    detection: float  # fraction of instances matched at the IoU gate
    classification: float  # fraction of instance labels covered
    both: float  # fraction matched and correctly labeled
    n_instances: int


def detection_rates(per_image: list[MatchResult]) -> DetectionRates:
    det = cls = both = n = 0
    for m in per_image:
        det += sum(m.detected)
        cls += sum(m.classified)
        both += sum(m.both)
        n += len(m.detected)
    if n == 0:
        return DetectionRates(0.0, 0.0, 0.0, 0)
    return DetectionRates(det / n, cls / n, both / n, n)


def average_precision(
    gt_per_image: list[list[Instance]],
    det_per_image: list[list[Detection]],
    iou_threshold: float = 0.5,
) -> float:
    """Precision-recall integration over confidence-ranked detections.

    A detection is a true positive if it claims an unmatched ground-truth
    instance of its predicted class with IoU above the gate; a gate of 0
    degenerates to pure classification (any unmatched same-class instance).
    """
    entries = []  # (confidence, image_idx, det)
    total_gt = 0
    for i, (gts, dets) in enumerate(zip(gt_per_image, det_per_image)):
        total_gt += len(gts)
        for d in dets:
            entries.append((d.confidence, i, d))
    if total_gt == 0:
        return 0.0
    entries.sort(key=lambda e: -e[0])
    taken: dict[int, list[bool]] = {i: [False] * len(g) for i, g in enumerate(gt_per_image)}
    tp = np.zeros(len(entries))
    for rank, (_, i, d) in enumerate(entries):
        gts = gt_per_image[i]
        best_iou, best_gi = -1.0, -1
        for gi, g in enumerate(gts):
            if taken[i][gi] or g.label != d.label:
                continue
            iou = box_iou(d.box, g.box)
            if iou_threshold > 0 and iou <= iou_threshold:
                continue
            if iou > best_iou:
                best_iou, best_gi = iou, gi
        if best_gi >= 0:
            taken[i][best_gi] = True
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / total_gt
    precision = cum_tp / np.arange(1, len(entries) + 1)
    # interpolated area under the precision-recall curve
    for k in range(len(precision) - 2, -1, -1):
        precision[k] = max(precision[k], precision[k + 1])
    ap = 0.0
    prev_r = 0.0
    for k in range(len(recall)):
        ap += (recall[k] - prev_r) * precision[k]
        prev_r = recall[k]
    return float(ap)


@dataclass
class ConvergenceReport:
    columns: dict[str, dict] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v["decreasing"] for v in self.columns.values()) and all(
            v["finite"] for v in self.columns.values()
        )


def convergence_report(
    metrics_csv: Path | str,
    columns: tuple[str, ...] = ("task_loss", "heatmap_loss"),
    alpha: float = 0.02,
) -> ConvergenceReport:
    """Exponentially smoothed loss curves with a decrease verdict per column.

    Verdict: final smoothed value strictly below the initial smoothed value.
    """
    rows = list(csv.DictReader(open(metrics_csv)))
    if len(rows) < 2:
        raise ValueError("metrics log needs at least 2 points")
    report = ConvergenceReport()
    for col in columns:
        values = np.array([float(r[col]) for r in rows])
        smooth = np.empty_like(values)
        acc = values[0]
        for i, v in enumerate(values):
            acc = (1 - alpha) * acc + alpha * v
            smooth[i] = acc
        report.columns[col] = {
            "initial": float(smooth[0]),
            "final": float(smooth[-1]),
            "decreasing": bool(smooth[-1] < smooth[0]),
            "finite": bool(np.isfinite(values).all()),
            "smoothed": smooth,
        }
    return report
