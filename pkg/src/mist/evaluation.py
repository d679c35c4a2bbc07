"""Checkpoint loading and dataset-level evaluation loops."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .baselines import channelwise_keypoints, grid_reconstruct
from .config import ExperimentConfig, apply_overrides
from .extraction import KeypointSet, extract_top_k
from .heatmap import ScaleSpaceHeatmap, ScaleSpaceSpec, heatmap_forward
from .metrics import Detection, DetectionRates, average_precision, detection_rates, match_detections, rmse
from .records import Dataset, SceneRecord
from .sampling import gather, paste_sum, window_sides
from .training import build_models, load_checkpoint


@dataclass
class ModelBundle:
    """A trained model with everything needed to run it on images."""

    cfg: ExperimentConfig
    models: dict
    spec: ScaleSpaceSpec

    @property
    def kind(self) -> str:
        return self.cfg.effective_model

    @classmethod
    def from_checkpoint(cls, path: Path | str) -> "ModelBundle":
        payload = load_checkpoint(path)
        cfg = _config_from_dict(payload["config"])
        in_channels = payload["models"]["task"]["encoder.stem.weight"].shape[1]
        models = build_models(cfg, in_channels)
        for k, m in models.items():
            m.load_state_dict(payload["models"][k])
            m.eval()
        return cls(cfg=cfg, models=models, spec=cfg.scales.to_spec())

    # ------------------------------------------------------------- inference

    @torch.no_grad()
    def keypoints(self, image: torch.Tensor, k: int) -> KeypointSet:
        if self.kind == "mist":
            per_scale, agg = heatmap_forward(self.models["heatmap"], image.unsqueeze(0), self.spec, self.cfg.heatmap.window)
            hm = ScaleSpaceHeatmap(per_scale[0], agg[0])
            return extract_top_k(hm, k, self.cfg.heatmap.nms_window)
        if self.kind == "channelwise":
            maps = self.models["heatmap"](image.unsqueeze(0))[0]
            kps = channelwise_keypoints(maps, self.cfg.baseline.temperature)
            order = torch.argsort(kps.score, descending=True)[:k]
            return KeypointSet(x=kps.x[order], y=kps.y[order], c=kps.c[order], score=kps.score[order])
        raise ValueError(f"model kind {self.kind!r} has no keypoints")

    @torch.no_grad()
    def detect(self, image: torch.Tensor, k: int) -> list[Detection]:
        """Keypoints -> square boxes (side = window size) with class labels
        from the classifier head when present."""
        kps = self.keypoints(image, k)
        sides = window_sides(kps.c, self.spec, self.cfg.taskhead.base_window)
        labels = [0] * len(kps)
        if self.cfg.task == "classify":
            patches = gather(image, kps.x, kps.y, kps.c, self.spec, self.cfg.taskhead.base_window)
            scores = self.models["task"](patches)
            labels = scores.argmax(dim=1).tolist()
        return [
            Detection(
                box=(float(kps.x[i]), float(kps.y[i]), float(sides[i]), float(sides[i])),
                label=int(labels[i]),
                confidence=float(kps.score[i]),
            )
            for i in range(len(kps))
        ]

    @torch.no_grad()
    def reconstruct(self, image: torch.Tensor, k: int) -> tuple[torch.Tensor, KeypointSet | None]:
        if self.cfg.task != "reconstruct":
            raise ValueError("model was trained for classification; it has no decoder")
        if self.kind == "grid":
            _, recon = grid_reconstruct(image, self.models["task"], self.cfg.data.grid)
            return recon, None
        kps = self.keypoints(image, k)
        patches = gather(image, kps.x, kps.y, kps.c, self.spec, self.cfg.taskhead.base_window)
        decoded = self.models["task"](patches)
        recon = paste_sum(decoded, kps.x, kps.y, kps.c, self.spec, image.shape[-2:], self.cfg.taskhead.base_window)
        return recon, kps

    @torch.no_grad()
    def decoded_patches(self, image: torch.Tensor, k: int) -> torch.Tensor:
        kps = self.keypoints(image, k)
        patches = gather(image, kps.x, kps.y, kps.c, self.spec, self.cfg.taskhead.base_window)
        return self.models["task"](patches)


def _config_from_dict(d: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    overrides = []
    sections = {"data": "data", "scales": "scales", "heatmap": "heatmap", "taskhead": "task", "train": "train", "baseline": "baseline", "eval": "eval"}
    for key, value in d.items():
        if key in sections:
            for k2, v2 in value.items():
                overrides.append(f"{sections[key]}.{k2}={v2}")
        else:
            overrides.append(f"experiment.{key}={value}")
    return apply_overrides(cfg, overrides)


def _image_tensor(rec: SceneRecord) -> torch.Tensor:
    return torch.from_numpy(rec.image).permute(2, 0, 1)


def evaluate_reconstruction(bundle: ModelBundle, dataset: Dataset, k: int | None = None, limit: int | None = None) -> dict:
    """Mean test RMSE of the summed patch reconstruction (or grid assembly)."""
    k = k or bundle.cfg.train.k
    n = len(dataset) if limit is None else min(limit, len(dataset))
    errors = []
    for i in range(n):
        rec = dataset[i]
        image = _image_tensor(rec)
        recon, _ = bundle.reconstruct(image, k)
        errors.append(rmse(image.numpy(), recon.numpy()))
    return {"rmse": float(np.mean(errors)), "n": n}


def evaluate_detection(
    bundle: ModelBundle,
    dataset: Dataset,
    iou_thresholds: tuple[float, ...] = (0.5,),
    matching: str = "greedy",
    k_mode: str = "gt_count",
    limit: int | None = None,
    detections_csv: Path | str | None = None,
) -> dict:
    """Instance-level detection/classification rates at IoU 0.5 plus AP at
    each requested threshold. ``k_mode='gt_count'`` extracts as many
    keypoints as the scene has instances; an integer k_mode fixes K.
    """
    n = len(dataset) if limit is None else min(limit, len(dataset))
    gt_all, det_all, match_all = [], [], []
    for i in range(n):
        rec = dataset[i]
        k = rec.count if k_mode == "gt_count" else int(k_mode)
        if k == 0:
            gt_all.append(rec.instances)
            det_all.append([])
            continue
        dets = bundle.detect(_image_tensor(rec), k)
        gt_all.append(rec.instances)
        det_all.append(dets)
        match_all.append(match_detections(rec.instances, dets, 0.5, matching))
    rates = detection_rates(match_all)
    aps = {f"ap_iou_{t:g}": average_precision(gt_all, det_all, t) for t in iou_thresholds}
    if detections_csv is not None:
        with open(detections_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["image", "x", "y", "side", "label", "confidence"])
            for i, dets in enumerate(det_all):
                for d in dets:
                    w.writerow([i, f"{d.box[0]:.3f}", f"{d.box[1]:.3f}", f"{d.box[2]:.3f}", d.label, f"{d.confidence:.6g}"])
    return {
        "detection_rate": rates.detection,
        "classification_rate": rates.classification,
        "both_rate": rates.both,
        "n_instances": rates.n_instances,
        **aps,
    }


def quick_eval(trainer, dataset: Dataset, subset: int) -> tuple[str, float]:
    """Cheap periodic metric for the training eval hook."""
    bundle = ModelBundle(cfg=trainer.cfg, models=trainer.models, spec=trainer.spec)
    if trainer.cfg.task == "reconstruct":
        result = evaluate_reconstruction(bundle, dataset, limit=subset)
        return "rmse", result["rmse"]
    result = evaluate_detection(bundle, dataset, iou_thresholds=(0.5,), limit=subset)
    return "both_rate", result["both_rate"]
