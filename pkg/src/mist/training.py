"""Three-stage training loop for the lifted objective.

Per batch, in order:

1. task step   -- gradient step on L_task + lambda * ||slack - anchors||^2
                  with respect to the task-head weights (the penalty is
                  constant here; slack starts at the extractor output, so the
                  penalty starts at exactly zero).
2. slack step  -- proximal gradient step(s) on the same objective with
                  respect to the slack keypoints: RMS-normalized task
                  gradient followed by the exact proximal update of the
                  quadratic penalty, which is stable for any lambda and
                  contracts displacement to zero as lambda grows.
3. heatmap step -- gradient step on || G(slack) - H(I) ||^2 with respect to
                  the heatmap weights, where G places unit mass at each
                  (rounded) slack keypoint split across its two neighboring
                  scale levels.

Baselines (grid, channel-wise) train under a single differentiable loss and
share the logging/checkpoint surfaces.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .baselines import ChannelwiseNet, channelwise_keypoints, grid_reconstruct
from .config import ExperimentConfig
from .extraction import KeypointSet, extract_top_k, generate_heatmap
from .heads import PatchAutoencoder, PatchClassifier, label_histogram
from .heatmap import HeatmapNet, ScaleSpaceHeatmap, heatmap_forward
from .records import Dataset
from .sampling import gather, paste_sum

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
METRIC_COLUMNS = ("iteration", "task_loss", "heatmap_loss", "slack_displacement", "degenerate_flag", "wall_time")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class StepMetrics:
    iteration: int
    task_loss: float
    heatmap_loss: float
    slack_displacement: float
    degenerate: bool
    wall_time: float

    def row(self) -> list:
        return [
            self.iteration,
            f"{self.task_loss:.8g}",
            f"{self.heatmap_loss:.8g}",
            f"{self.slack_displacement:.8g}",
            int(self.degenerate),
            f"{self.wall_time:.3f}",
        ]


def build_models(cfg: ExperimentConfig, in_channels: int) -> dict[str, nn.Module]:
    """Instantiate the networks for the configured model/task pair."""
    t = cfg.taskhead
    models: dict[str, nn.Module] = {}
    if cfg.task == "reconstruct":
        models["task"] = PatchAutoencoder(in_channels, base=t.base_channels, bottleneck=t.bottleneck)
    else:
        models["task"] = PatchClassifier(in_channels, base=t.base_channels, bottleneck=t.bottleneck)
    kind = cfg.effective_model
    if kind == "mist":
        models["heatmap"] = HeatmapNet(in_channels, channels=cfg.heatmap.channels, blocks=cfg.heatmap.blocks)
    elif kind == "channelwise":
        models["heatmap"] = ChannelwiseNet(in_channels, cfg.train.k, channels=cfg.heatmap.channels, blocks=cfg.heatmap.blocks)
    return models


def save_checkpoint(path: Path, cfg: ExperimentConfig, models: dict[str, nn.Module], optimizers: dict, iteration: int) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "iteration": iteration,
        "config": asdict(cfg),
        "models": {k: m.state_dict() for k, m in models.items()},
        "optimizers": {k: o.state_dict() for k, o in optimizers.items()},
        "torch_rng": torch.get_rng_state(),
    }
    tmp = path.with_suffix(".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: Path | str) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version in {path}")
    return payload


def _to_batch(dataset: Dataset, indices: np.ndarray) -> tuple[torch.Tensor, list[list[int]]]:
    images = []
    labels = []
    for i in indices:
        rec = dataset[int(i)]
        images.append(torch.from_numpy(rec.image).permute(2, 0, 1))
        labels.append([inst.label for inst in rec.instances])
    return torch.stack(images), labels


def _gather_all(images: torch.Tensor, slack: torch.Tensor, spec, base_window: float) -> torch.Tensor:
    """(B,C,H,W) + (B,K,3) -> (B,K,C,P,P), differentiable in slack."""
    out = [gather(images[b], slack[b, :, 0], slack[b, :, 1], slack[b, :, 2], spec, base_window) for b in range(len(images))]
    return torch.stack(out)


class Trainer:
    def __init__(self, cfg: ExperimentConfig, run_dir: Path | str, dataset: Dataset, eval_dataset: Dataset | None = None):
        cfg.validate()
        self.cfg = cfg
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.dataset = dataset
        self.eval_dataset = eval_dataset
        self.spec = cfg.scales.to_spec()
        self.kind = cfg.effective_model

        torch.manual_seed(cfg.seed)
        in_channels = dataset.image_shape()[2]
        self.models = build_models(cfg, in_channels)
        self.optimizers = self._build_optimizers()
        self.iteration = 0
        self._batch_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xBA7C)))
        self._order: np.ndarray | None = None
        self._cursor = 0

        last = self.run_dir / "checkpoint_last.pt"
        if last.exists():
            self._resume(last)

    # ------------------------------------------------------------------ setup

    def _build_optimizers(self) -> dict:
        tr = self.cfg.train
        make = (
            (lambda p, lr: torch.optim.Adam(p, lr=lr))
            if tr.optimizer == "adam"
            else (lambda p, lr: torch.optim.SGD(p, lr=lr))
        )
        opts = {"task": make(self.models["task"].parameters(), tr.lr_task)}
        if "heatmap" in self.models:
            opts["heatmap"] = make(self.models["heatmap"].parameters(), tr.lr_heatmap)
        return opts

    def _resume(self, path: Path) -> None:
        payload = load_checkpoint(path)
        for k, m in self.models.items():
            m.load_state_dict(payload["models"][k])
        for k, o in self.optimizers.items():
            o.load_state_dict(payload["optimizers"][k])
        torch.set_rng_state(payload["torch_rng"])
        self.iteration = payload["iteration"]
        log.info("resumed %s at iteration %d", path, self.iteration)

    def _next_indices(self) -> np.ndarray:
        bs = self.cfg.train.batch_size
        if self._order is None or self._cursor + bs > len(self._order):
            self._order = self._batch_rng.permutation(len(self.dataset))
            self._cursor = 0
        out = self._order[self._cursor : self._cursor + bs]
        self._cursor += bs
        return out

    # ------------------------------------------------------------ loss pieces

    def _task_loss(self, images: torch.Tensor, slack: torch.Tensor, labels: list[list[int]]) -> torch.Tensor:
        """Mean per-image task loss at the given (possibly live) slack."""
        cfg = self.cfg
        patches = _gather_all(images, slack, self.spec, cfg.taskhead.base_window)
        b, k = patches.shape[:2]
        flat = patches.reshape(b * k, *patches.shape[2:])
        if cfg.task == "reconstruct":
            decoded = self.models["task"](flat).reshape(b, k, *patches.shape[2:])
            losses = []
            for i in range(b):
                recon = paste_sum(decoded[i], slack[i, :, 0], slack[i, :, 1], slack[i, :, 2], self.spec, images.shape[-2:], cfg.taskhead.base_window)
                losses.append(torch.mean((images[i] - recon) ** 2))
            return torch.stack(losses).mean()
        scores = self.models["task"](flat).reshape(b, k, -1)
        probs = torch.softmax(scores, dim=2)
        losses = []
        for i in range(b):
            if not labels[i] and not cfg.train.allow_empty_scenes:
                raise ValueError("empty scene encountered but allow_empty_scenes is off")
            target = label_histogram(labels[i], scores.shape[2], dtype=scores.dtype)
            losses.append(torch.sum((target - probs[i].mean(dim=0)) ** 2))
        return torch.stack(losses).mean()

    def _penalty(self, slack: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
        tr = self.cfg.train
        w = torch.tensor([tr.penalty_weight_x, tr.penalty_weight_y, tr.penalty_weight_c], dtype=slack.dtype)
        return tr.penalty_weight * (w * (slack - anchors) ** 2).sum(dim=(1, 2)).mean()

    def _slack_prox(self, slack: torch.Tensor, grad: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
        """One forward-backward step: normalized task gradient, then the exact
        proximal map of the quadratic penalty."""
        tr = self.cfg.train
        lr = torch.tensor([tr.lr_slack, tr.lr_slack, tr.lr_slack * tr.slack_c_lr_scale], dtype=slack.dtype)
        rms = grad.pow(2).mean(dim=(0, 1)).sqrt()  # per component over (B, K)
        g = grad / (rms + 1e-12)
        z = slack - lr * g
        w = torch.tensor([tr.penalty_weight_x, tr.penalty_weight_y, tr.penalty_weight_c], dtype=slack.dtype)
        shrink = 2.0 * lr * tr.penalty_weight * w
        return (z + shrink * anchors) / (1.0 + shrink)

    def _clamp_slack(self, slack: torch.Tensor, h: int, w: int) -> torch.Tensor:
        slack[:, :, 0].clamp_(0, w - 1)
        slack[:, :, 1].clamp_(0, h - 1)
        slack[:, :, 2].clamp_(0, self.spec.levels - 1)
        return slack

    # ------------------------------------------------------------------ steps

    def mist_step(
        self, images: torch.Tensor, labels: list[list[int]], stage_probe=None
    ) -> tuple[float, float, float, bool]:
        cfg = self.cfg
        b, _, h, w = images.shape
        per_scale, aggregated = heatmap_forward(self.models["heatmap"], images, self.spec, cfg.heatmap.window)

        # anchor extraction (non-differentiable, detached)
        anchors = torch.zeros(b, cfg.train.k, 3)
        degenerate = False
        with torch.no_grad():
            for i in range(b):
                hm = ScaleSpaceHeatmap(per_scale[i].detach(), aggregated[i].detach())
                kps = extract_top_k(hm, cfg.train.k, cfg.heatmap.nms_window)
                degenerate = degenerate or kps.degenerate
                anchors[i] = kps.as_tensor()
        slack = anchors.clone()
        if stage_probe:
            stage_probe("anchors", slack)

        # stage 1: task parameters (penalty is identically zero at slack init)
        shared_grad = None
        if cfg.train.share_task_forward:
            slack_var = slack.clone().requires_grad_(True)
            task_loss = self._task_loss(images, slack_var, labels)
            self.optimizers["task"].zero_grad()
            task_loss.backward()
            self.optimizers["task"].step()
            shared_grad = slack_var.grad.detach().clone()
        else:
            task_loss = self._task_loss(images, slack, labels)
            self.optimizers["task"].zero_grad()
            task_loss.backward()
            self.optimizers["task"].step()
        if stage_probe:
            stage_probe("task_step", slack)

        if not torch.isfinite(task_loss.detach()):
            self._dump_diagnostics(images)
            raise TrainingDiverged(
                f"non-finite task loss at iteration {self.iteration + 1}; "
                f"batch dumped to {self.run_dir / 'diagnostics'}"
            )

        # stage 2: slack keypoints
        for step in range(cfg.train.slack_steps):
            if step == 0 and shared_grad is not None:
                grad = shared_grad
            else:
                slack_var = slack.clone().requires_grad_(True)
                loss = self._task_loss(images, slack_var, labels)
                (grad,) = torch.autograd.grad(loss, slack_var)
            slack = self._slack_prox(slack, grad, anchors)
            slack = self._clamp_slack(slack, h, w)
        if stage_probe:
            stage_probe("slack_step", slack)

        # stage 3: heatmap parameters against the generated ideal map
        target = torch.zeros_like(per_scale)
        with torch.no_grad():
            for i in range(b):
                gen = generate_heatmap(
                    KeypointSet.from_tensor(slack[i]),
                    (self.spec.levels, h, w),
                    allow_overlap=True,
                    dtype=per_scale.dtype,
                )
                target[i] = gen.per_scale
        heatmap_loss = torch.mean((target - per_scale) ** 2)
        self.optimizers["heatmap"].zero_grad()
        heatmap_loss.backward()
        self.optimizers["heatmap"].step()
        if stage_probe:
            stage_probe("heatmap_step", slack)

        displacement = torch.linalg.norm(slack[:, :, :2] - anchors[:, :, :2], dim=2).mean()
        return float(task_loss.detach()), float(heatmap_loss.detach()), float(displacement), degenerate

    def channelwise_step(self, images: torch.Tensor, labels: list[list[int]]) -> tuple[float, float, float, bool]:
        cfg = self.cfg
        maps = self.models["heatmap"](images)  # (B, K, H, W)
        slack_rows = []
        for i in range(len(images)):
            kps = channelwise_keypoints(maps[i], cfg.baseline.temperature)
            slack_rows.append(torch.stack([kps.x, kps.y, kps.c], dim=1))
        slack = torch.stack(slack_rows)  # differentiable through soft-argmax
        task_loss = self._task_loss(images, slack, labels)
        self.optimizers["task"].zero_grad()
        self.optimizers["heatmap"].zero_grad()
        task_loss.backward()
        self.optimizers["task"].step()
        self.optimizers["heatmap"].step()
        return float(task_loss.detach()), 0.0, 0.0, False

    def grid_step(self, images: torch.Tensor, labels: list[list[int]]) -> tuple[float, float, float, bool]:
        losses = []
        for i in range(len(images)):
            loss, _ = grid_reconstruct(images[i], self.models["task"], self.cfg.data.grid)
            losses.append(loss)
        task_loss = torch.stack(losses).mean()
        self.optimizers["task"].zero_grad()
        task_loss.backward()
        self.optimizers["task"].step()
        return float(task_loss.detach()), 0.0, 0.0, False

    # ------------------------------------------------------------------- loop

    def train_step(self, images: torch.Tensor, labels: list[list[int]]) -> StepMetrics:
        t0 = time.time()
        if self.kind == "mist":
            task_loss, heat_loss, disp, degen = self.mist_step(images, labels)
        elif self.kind == "channelwise":
            task_loss, heat_loss, disp, degen = self.channelwise_step(images, labels)
        else:
            task_loss, heat_loss, disp, degen = self.grid_step(images, labels)
        self.iteration += 1
        if not (np.isfinite(task_loss) and np.isfinite(heat_loss)):
            self._dump_diagnostics(images)
            raise TrainingDiverged(
                f"non-finite loss at iteration {self.iteration} "
                f"(task={task_loss}, heatmap={heat_loss}); batch dumped to {self.run_dir / 'diagnostics'}"
            )
        return StepMetrics(self.iteration, task_loss, heat_loss, disp, degen, time.time() - t0)

    def _dump_diagnostics(self, images: torch.Tensor) -> None:
        out = self.run_dir / "diagnostics"
        out.mkdir(exist_ok=True)
        np.save(out / f"batch_{self.iteration}.npy", images.detach().numpy())
        if self.kind == "mist":
            with torch.no_grad():
                per_scale, agg = heatmap_forward(self.models["heatmap"], images, self.spec, self.cfg.heatmap.window)
            np.save(out / f"per_scale_{self.iteration}.npy", per_scale.numpy())
            np.save(out / f"aggregated_{self.iteration}.npy", agg.numpy())

    def run(self, progress_every: int = 100) -> Path:
        cfg = self.cfg
        metrics_path = self.run_dir / "metrics.csv"
        new_file = not metrics_path.exists()
        with open(metrics_path, "a", newline="") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(METRIC_COLUMNS)
            while self.iteration < cfg.train.iterations:
                images, labels = _to_batch(self.dataset, self._next_indices())
                metrics = self.train_step(images, labels)
                if metrics.iteration % cfg.train.log_every == 0 or metrics.iteration == cfg.train.iterations:
                    writer.writerow(metrics.row())
                    f.flush()
                if metrics.iteration % progress_every == 0:
                    log.info(
                        "iter %d task=%.5f heatmap=%.6f disp=%.3f",
                        metrics.iteration, metrics.task_loss, metrics.heatmap_loss, metrics.slack_displacement,
                    )
                if metrics.iteration % cfg.train.checkpoint_every == 0:
                    save_checkpoint(self.run_dir / "checkpoint_last.pt", cfg, self.models, self.optimizers, self.iteration)
                if self.eval_dataset is not None and metrics.iteration % cfg.train.eval_every == 0:
                    self._eval_hook()
        save_checkpoint(self.run_dir / "checkpoint_last.pt", cfg, self.models, self.optimizers, self.iteration)
        return self.run_dir / "checkpoint_last.pt"

    def _eval_hook(self) -> None:
        from .evaluation import quick_eval

        value = quick_eval(self, self.eval_dataset, self.cfg.train.eval_subset)
        path = self.run_dir / "eval.csv"
        new_file = not path.exists()
        with open(path, "a", newline="") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(["iteration", "metric", "value"])
            writer.writerow([self.iteration, value[0], f"{value[1]:.6g}"])


def train(cfg: ExperimentConfig, run_dir: Path | str, dataset: Dataset, eval_dataset: Dataset | None = None) -> Path:
    """Train to cfg.train.iterations (resuming from the last checkpoint if
    present) and return the final checkpoint path."""
    trainer = Trainer(cfg, run_dir, dataset, eval_dataset)
    return trainer.run()
