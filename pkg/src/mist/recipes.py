"""Named end-to-end recipes: each one regenerates its data, trains (or
resumes) the models it needs, evaluates, and checks its pass thresholds.

Completed training runs are keyed by config hash and reused; evaluation is
always recomputed from the checkpoint.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig, config_hash
from .datasets import ensure_datasets
from .evaluation import ModelBundle, evaluate_detection, evaluate_reconstruction
from .extraction import KeypointSet, extract_top_k, generate_heatmap
from .heatmap import ScaleSpaceSpec
from .metrics import convergence_report
from .records import Dataset
from .training import train
from .visualize import save_convergence_plot, save_detection_panel, save_patch_bank

log = logging.getLogger(__name__)


@dataclass
class RecipeResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    checks: list[str] = field(default_factory=list)

    def add_check(self, label: str, ok: bool, detail: str = "") -> None:
        self.passed = self.passed and ok
        line = f"[{'PASS' if ok else 'FAIL'}] {self.name}: {label}"
        if detail:
            line += f" ({detail})"
        self.checks.append(line)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "metrics": self.metrics, "checks": self.checks}


# --------------------------------------------------------------------- configs


def _desk(cfg: ExperimentConfig) -> ExperimentConfig:
    """Shared desk-scale training knobs (single commodity CPU)."""
    cfg.taskhead.base_channels = 8
    cfg.taskhead.bottleneck = 96
    cfg.train.batch_size = 8
    cfg.train.lr_task = 1e-3
    cfg.train.lr_heatmap = 4e-4
    cfg.train.lr_slack = 1.0
    cfg.train.slack_steps = 2
    cfg.train.penalty_weight = 0.3
    cfg.train.share_task_forward = True
    cfg.train.log_every = 10
    cfg.train.eval_every = 1000
    cfg.train.checkpoint_every = 250
    return cfg


def mnist_easy_config(model: str = "mist") -> ExperimentConfig:
    cfg = _desk(ExperimentConfig(name=f"mnist_easy_{model}", task="reconstruct", model=model, seed=7))
    cfg.data.dataset = "mnist_easy"
    cfg.data.canvas = 96
    cfg.data.grid = 3
    cfg.data.train_size = 5000
    cfg.data.test_size = 1000
    cfg.scales.S = 3
    cfg.train.k = 9
    cfg.train.iterations = 3000 if model == "mist" else 2000
    return cfg


def mnist_hard_config(model: str = "mist", counts: tuple[int, int] = (9, 9), train_size: int = 10000) -> ExperimentConfig:
    tag = f"{counts[0]}to{counts[1]}"
    cfg = _desk(ExperimentConfig(name=f"mnist_hard_{model}_{tag}", task="classify", model=model, seed=7))
    cfg.data.dataset = "mnist_hard"
    cfg.data.canvas = 128
    cfg.data.count_min, cfg.data.count_max = counts
    cfg.data.min_separation = 28.0
    cfg.data.train_size = train_size
    cfg.data.test_size = 500
    cfg.scales.S = 1  # constant-size instances; single-scale detection
    cfg.train.k = 9
    cfg.train.iterations = 3000
    return cfg


def gabor_config() -> ExperimentConfig:
    cfg = _desk(ExperimentConfig(name="gabor_mist", task="reconstruct", model="mist", seed=7))
    cfg.data.dataset = "gabor"
    cfg.data.canvas = 128
    cfg.data.impulses = 16
    cfg.data.train_size = 2000
    cfg.data.test_size = 256
    cfg.scales.S = 1
    cfg.train.k = 16
    cfg.train.iterations = 2500
    return cfg


# -------------------------------------------------------------------- helpers


def _run_dir(cfg: ExperimentConfig, out_root: Path) -> Path:
    return out_root / f"{cfg.name}_{config_hash(cfg)}"


def ensure_trained(cfg: ExperimentConfig, out_root: Path, data_root: Path) -> Path:
    """Train (resuming if interrupted) unless a completed run already exists.
    Returns the run directory."""
    run_dir = _run_dir(cfg, out_root)
    ckpt = run_dir / "checkpoint_last.pt"
    if ckpt.exists():
        from .training import load_checkpoint

        if load_checkpoint(ckpt)["iteration"] >= cfg.train.iterations:
            log.info("reusing completed run %s", run_dir)
            return run_dir
    train_set, test_set = ensure_datasets(cfg, data_root)
    t0 = time.time()
    train(cfg, run_dir, train_set, test_set)
    log.info("trained %s in %.1f min", cfg.name, (time.time() - t0) / 60)
    return run_dir


def _bundle(run_dir: Path) -> ModelBundle:
    return ModelBundle.from_checkpoint(run_dir / "checkpoint_last.pt")


def _test_set(cfg: ExperimentConfig, data_root: Path) -> Dataset:
    _, test_set = ensure_datasets(cfg, data_root)
    return test_set


def _panel_exports(bundle: ModelBundle, test_set: Dataset, run_dir: Path, k: int, n: int = 3) -> None:
    for i in range(min(n, len(test_set))):
        rec = test_set[i]
        image = torch.from_numpy(rec.image).permute(2, 0, 1)
        recon, _ = bundle.reconstruct(image, k) if bundle.kind != "grid" else bundle.reconstruct(image, k)
        dets = bundle.detect(image, k) if bundle.kind != "grid" else []
        save_detection_panel(
            rec.image,
            dets,
            run_dir / f"panel_{i}.png",
            gt=rec.instances,
            reconstruction=np.clip(recon.permute(1, 2, 0).numpy(), 0, 1),
        )


# -------------------------------------------------------------------- recipes


def recipe_roundtrip(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 1: generate-then-extract recovers 1000 random keypoint sets."""
    result = RecipeResult("roundtrip", True)
    rng = np.random.default_rng(11)
    t0 = time.time()
    worst_xy, worst_c = 0.0, 0.0
    for _ in range(1000):
        pts: list[tuple[float, float, float]] = []
        while len(pts) < 4:
            x, y = rng.uniform(1, 62), rng.uniform(1, 62)
            if all((x - p[0]) ** 2 + (y - p[1]) ** 2 > 15.0**2 for p in pts):
                pts.append((x, y, rng.uniform(0, 2)))
        kps = KeypointSet.from_tensor(torch.tensor(pts, dtype=torch.float64))
        hm = generate_heatmap(kps, (3, 64, 64), dtype=torch.float64)
        out = extract_top_k(hm, 4, nms_window=15)
        for i in range(4):
            d = (out.x - kps.x[i]) ** 2 + (out.y - kps.y[i]) ** 2
            j = int(d.argmin())
            worst_xy = max(worst_xy, abs(float(out.x[j] - kps.x[i])), abs(float(out.y[j] - kps.y[i])))
            worst_c = max(worst_c, abs(float(out.c[j] - kps.c[i])))
    elapsed = time.time() - t0
    result.metrics = {"worst_xy": worst_xy, "worst_c": worst_c, "seconds": elapsed}
    result.add_check("spatial error <= 0.5 px", worst_xy <= 0.5, f"worst {worst_xy:.3f}")
    result.add_check("scale error <= 1e-6", worst_c <= 1e-6, f"worst {worst_c:.2e}")
    result.add_check("runtime < 60 s", elapsed < 60, f"{elapsed:.1f}s")
    return result


def recipe_nms_oracle(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 2: extraction equals exhaustive NMS + top-K on random maps."""
    from .heatmap import ScaleSpaceHeatmap

    result = RecipeResult("nms-oracle", True)
    rng = np.random.default_rng(13)
    t0 = time.time()
    mismatches = 0
    for _ in range(1000):
        per_scale = torch.from_numpy(rng.random((3, 16, 16)))
        hm = ScaleSpaceHeatmap.from_per_scale(per_scale)
        agg = hm.aggregated.numpy()
        for k in range(1, 6):
            kps = extract_top_k(hm, k, nms_window=5)
            ex, ey, ec, esc = _exhaustive_nms(hm.per_scale.numpy(), agg, k, 5)
            if not (
                np.array_equal(kps.x.numpy(), ex)
                and np.array_equal(kps.y.numpy(), ey)
                and np.allclose(kps.c.numpy(), ec, atol=1e-12)
                and np.array_equal(kps.score.numpy(), esc)
            ):
                mismatches += 1
    elapsed = time.time() - t0
    result.metrics = {"mismatches": mismatches, "seconds": elapsed}
    result.add_check("exact oracle agreement (1000 maps, K=1..5)", mismatches == 0, f"{mismatches} mismatches")
    result.add_check("runtime < 60 s", elapsed < 60, f"{elapsed:.1f}s")
    return result


def _exhaustive_nms(per_scale: np.ndarray, agg: np.ndarray, k: int, window: int):
    s, h, w = per_scale.shape
    half = window // 2
    survivors, suppressed = [], []
    for yy in range(h):
        for xx in range(w):
            neighborhood = agg[max(0, yy - half) : yy + half + 1, max(0, xx - half) : xx + half + 1]
            entry = (-agg[yy, xx], yy, xx)
            (survivors if agg[yy, xx] == neighborhood.max() else suppressed).append(entry)
    survivors.sort()
    suppressed.sort()
    chosen = (survivors + suppressed)[:k]
    xs = np.array([float(xx) for _, _, xx in chosen])
    ys = np.array([float(yy) for _, yy, _ in chosen])
    scores = np.array([-neg for neg, _, _ in chosen])
    cs = []
    for _, yy, xx in chosen:
        wts = per_scale[:, yy, xx].astype(np.float64)
        cs.append(float((wts * np.arange(s)).sum() / wts.sum()) if wts.sum() > 0 else 0.0)
    return xs, ys, np.array(cs), scores


def recipe_gradients(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 3: adjoint identity and finite-difference gradient checks."""
    from .heads import PatchAutoencoder, PatchClassifier, classify_loss, reconstruct_loss
    from .heatmap import heatmap_forward, HeatmapNet, softmax_pool_scales
    from .sampling import PatchBatch, gather, gather_vjp

    result = RecipeResult("gradients", True)
    t0 = time.time()
    spec = ScaleSpaceSpec(levels=2)
    rng = np.random.default_rng(17)

    # adjoint identity over 100 draws
    worst_adj = 0.0
    for _ in range(100):
        image = torch.from_numpy(rng.random((1, 40, 40)))
        x = torch.tensor([rng.uniform(8, 32)], dtype=torch.float64)
        y = torch.tensor([rng.uniform(8, 32)], dtype=torch.float64)
        c = torch.tensor([rng.uniform(0, 1)], dtype=torch.float64)
        upstream = torch.from_numpy(rng.random((1, 1, 16, 16)))
        patch = gather(image, x, y, c, spec, 16.0, 16)
        grads = gather_vjp(image, x, y, c, spec, upstream, 16.0, 16)
        lhs = float((patch * upstream).sum())
        rhs = float((image * grads["image"]).sum())
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(1.0, abs(lhs)))
    result.add_check("adjoint identity rel err <= 1e-5", worst_adj <= 1e-5, f"worst {worst_adj:.2e}")

    def fd_ladder(forward, storage, idx, analytic, tol=1e-3):
        last = None
        for step in (1e-7, 2.5e-8, 6.25e-9):
            orig = float(storage[idx])
            storage[idx] = orig + step
            fp = float(forward())
            storage[idx] = orig - step
            fm = float(forward())
            storage[idx] = orig
            last = (fp - fm) / (2 * step)
            if abs(analytic - last) <= tol * max(1.0, abs(last)):
                return 0.0
        return abs(analytic - last)

    ys_, xs_ = torch.meshgrid(torch.linspace(0, 3, 64, dtype=torch.float64), torch.linspace(0, 3, 64, dtype=torch.float64), indexing="ij")
    smooth = (0.45 + 0.3 * torch.sin(2.1 * xs_ + 0.3) * torch.cos(1.7 * ys_))[None].clone()

    # gather position gradients
    worst = 0.0
    xyc = torch.tensor([[25.31, 27.57, 0.4]], dtype=torch.float64, requires_grad=True)
    upstream = torch.from_numpy(rng.random((1, 1, 16, 16)))

    def fwd_gather():
        return (gather(smooth, xyc[:, 0], xyc[:, 1], xyc[:, 2], spec, 16.0, 16) * upstream).sum()

    (g,) = torch.autograd.grad(fwd_gather(), [xyc])
    flat = xyc.detach().reshape(-1)
    for idx in range(3):
        worst = max(worst, fd_ladder(fwd_gather, flat, idx, float(g.reshape(-1)[idx])))
    result.add_check("gather FD rel err <= 1e-3", worst == 0.0, f"residual {worst:.2e}")

    # both losses
    torch.manual_seed(5)
    ae = PatchAutoencoder(1, base=2, bottleneck=8).double()
    clf = PatchClassifier(1, base=2, bottleneck=8).double()
    xyc2 = torch.tensor([[25.31, 27.57, 0.3], [36.42, 30.18, 0.5]], dtype=torch.float64, requires_grad=True)

    def fwd_recon():
        patches = gather(smooth, xyc2[:, 0], xyc2[:, 1], xyc2[:, 2], spec)
        batch = PatchBatch(patches, KeypointSet.from_tensor(xyc2.detach()))
        loss, _ = reconstruct_loss(smooth, batch, ae, spec, x=xyc2[:, 0], y=xyc2[:, 1], c=xyc2[:, 2])
        return loss

    def fwd_cls():
        patches = gather(smooth, xyc2[:, 0], xyc2[:, 1], xyc2[:, 2], spec)
        batch = PatchBatch(patches, KeypointSet.from_tensor(xyc2.detach()))
        loss, _ = classify_loss([3, 8], batch, clf)
        return loss

    worst = 0.0
    for fwd, net in ((fwd_recon, ae), (fwd_cls, clf)):
        params = list(net.parameters())
        grads = torch.autograd.grad(fwd(), [xyc2] + params)
        flat = xyc2.detach().reshape(-1)
        for idx in range(6):
            worst = max(worst, fd_ladder(fwd, flat, idx, float(grads[0].reshape(-1)[idx])))
        for p, gp in ((params[0], grads[1]), (params[-1], grads[-1])):
            storage = p.detach().reshape(-1)
            for idx in range(0, storage.numel(), max(1, storage.numel() // 3)):
                worst = max(worst, fd_ladder(fwd, storage, idx, float(gp.reshape(-1)[idx])))
    result.add_check("task loss FD rel err <= 1e-3", worst == 0.0, f"residual {worst:.2e}")

    # softmax pooling chain gradient (through the full heatmap forward)
    torch.manual_seed(6)
    hnet = HeatmapNet(1, channels=4, blocks=1).double()
    image16 = torch.from_numpy(rng.random((1, 1, 16, 16)))
    probe = torch.from_numpy(rng.random((1, 16, 16)))

    def fwd_pool():
        _, agg = heatmap_forward(hnet, image16, ScaleSpaceSpec(levels=2), window=5)
        return (agg * probe).sum()

    params = list(hnet.parameters())
    grads = torch.autograd.grad(fwd_pool(), params)
    worst = 0.0
    for p, gp in zip(params, grads):
        storage = p.detach().reshape(-1)
        for idx in range(0, storage.numel(), max(1, storage.numel() // 3)):
            worst = max(worst, fd_ladder(fwd_pool, storage, idx, float(gp.reshape(-1)[idx])))
    result.add_check("softmax-pool FD rel err <= 1e-3", worst == 0.0, f"residual {worst:.2e}")

    elapsed = time.time() - t0
    result.metrics = {"seconds": elapsed}
    result.add_check("runtime < 5 min", elapsed < 300, f"{elapsed:.1f}s")
    return result


def recipe_mnist_easy(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 4: grid-layout reconstruction, main model vs grid baseline."""
    result = RecipeResult("mnist-easy", True)
    cfg = mnist_easy_config("mist")
    grid_cfg = mnist_easy_config("grid")
    run = ensure_trained(cfg, out_root, data_root)
    grid_run = ensure_trained(grid_cfg, out_root, data_root)
    test_set = _test_set(cfg, data_root)

    mist_eval = evaluate_reconstruction(_bundle(run), test_set, k=cfg.train.k)
    grid_eval = evaluate_reconstruction(_bundle(grid_run), test_set, k=grid_cfg.train.k)
    result.metrics = {"mist_rmse": mist_eval["rmse"], "grid_rmse": grid_eval["rmse"], "run": str(run), "grid_run": str(grid_run)}
    result.add_check("test RMSE <= 0.06", mist_eval["rmse"] <= 0.06, f"rmse {mist_eval['rmse']:.4f}")
    result.add_check(
        "RMSE <= grid baseline + 0.01",
        mist_eval["rmse"] <= grid_eval["rmse"] + 0.01,
        f"{mist_eval['rmse']:.4f} vs grid {grid_eval['rmse']:.4f}",
    )
    _panel_exports(_bundle(run), test_set, run, cfg.train.k)
    return result


def recipe_mnist_hard(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 5: localization emerges from classification supervision."""
    result = RecipeResult("mnist-hard", True)
    cfg = mnist_hard_config("mist")
    cw_cfg = mnist_hard_config("channelwise")
    run = ensure_trained(cfg, out_root, data_root)
    cw_run = ensure_trained(cw_cfg, out_root, data_root)
    test_set = _test_set(cfg, data_root)

    mist_eval = evaluate_detection(
        _bundle(run), test_set, iou_thresholds=(0.0, 0.5), detections_csv=run / "detections.csv"
    )
    cw_eval = evaluate_detection(_bundle(cw_run), test_set, iou_thresholds=(0.5,))
    result.metrics = {"mist": mist_eval, "channelwise": cw_eval, "run": str(run), "channelwise_run": str(cw_run)}
    result.add_check("detection IoU-50 >= 85%", mist_eval["detection_rate"] >= 0.85, f"{mist_eval['detection_rate']:.1%}")
    result.add_check("detection+classification >= 80%", mist_eval["both_rate"] >= 0.80, f"{mist_eval['both_rate']:.1%}")
    result.add_check(
        "channel-wise baseline <= 50% IoU-50",
        cw_eval["detection_rate"] <= 0.50,
        f"{cw_eval['detection_rate']:.1%}",
    )
    _panel_exports(_bundle(run), test_set, run, cfg.train.k)
    return result


def recipe_k_sensitivity(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 6: training K fixed at 9 while scene counts vary in 3..9."""
    result = RecipeResult("k-sensitivity", True)
    fixed_cfg = mnist_hard_config("mist")
    var_cfg = mnist_hard_config("mist", counts=(3, 9))
    fixed_run = ensure_trained(fixed_cfg, out_root, data_root)
    var_run = ensure_trained(var_cfg, out_root, data_root)

    fixed_eval = evaluate_detection(_bundle(fixed_run), _test_set(fixed_cfg, data_root), iou_thresholds=(0.5,))
    var_eval = evaluate_detection(_bundle(var_run), _test_set(var_cfg, data_root), iou_thresholds=(0.5,))
    ap_fixed = fixed_eval["ap_iou_0.5"]
    ap_var = var_eval["ap_iou_0.5"]
    result.metrics = {"ap_fixed": ap_fixed, "ap_variable": ap_var, "run": str(var_run)}
    result.add_check(
        "AP(IoU=.50) within 10 points of fixed-count run",
        abs(ap_fixed - ap_var) <= 0.10,
        f"fixed {ap_fixed:.1%} vs variable {ap_var:.1%}",
    )
    return result


def recipe_gabor(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 7: inverse rendering of wavelet noise."""
    result = RecipeResult("gabor", True)
    cfg = gabor_config()
    run = ensure_trained(cfg, out_root, data_root)
    test_set = _test_set(cfg, data_root)
    bundle = _bundle(run)

    recon_eval = evaluate_reconstruction(bundle, test_set, k=cfg.train.k)
    corr = decoded_patch_correlation(bundle, test_set, cfg.train.k, n_images=24)
    result.metrics = {"rmse": recon_eval["rmse"], "patch_correlation": corr, "run": str(run)}
    result.add_check("test RMSE <= 0.12", recon_eval["rmse"] <= 0.12, f"rmse {recon_eval['rmse']:.4f}")
    result.add_check("mean pairwise decoded-patch correlation >= 0.8", corr >= 0.8, f"corr {corr:.3f}")

    rec = test_set[0]
    patches = bundle.decoded_patches(torch.from_numpy(rec.image).permute(2, 0, 1), cfg.train.k)
    save_patch_bank(patches.numpy(), run / "patch_bank.png")
    _panel_exports(bundle, test_set, run, cfg.train.k)
    return result


def decoded_patch_correlation(bundle: ModelBundle, test_set: Dataset, k: int, n_images: int = 24) -> float:
    """Mean pairwise Pearson correlation of flattened decoded patches."""
    vecs = []
    for i in range(min(n_images, len(test_set))):
        rec = test_set[i]
        patches = bundle.decoded_patches(torch.from_numpy(rec.image).permute(2, 0, 1), k)
        vecs.append(patches.reshape(len(patches), -1).numpy())
    flat = np.concatenate(vecs)
    flat = flat - flat.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(flat, axis=1)
    keep = norms > 1e-9
    flat = flat[keep] / norms[keep, None]
    corr = flat @ flat.T
    n = len(corr)
    off_diag = (corr.sum() - n) / (n * (n - 1))
    return float(off_diag)


def recipe_convergence(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 8: smoothed loss curves decrease on the three training runs."""
    result = RecipeResult("convergence", True)
    runs = {
        "mnist-easy": _run_dir(mnist_easy_config("mist"), out_root),
        "mnist-hard": _run_dir(mnist_hard_config("mist"), out_root),
        "gabor": _run_dir(gabor_config(), out_root),
    }
    for name, run in runs.items():
        csv_path = run / "metrics.csv"
        if not csv_path.exists():
            result.add_check(f"{name} metrics log present", False, f"missing {csv_path}")
            continue
        report = convergence_report(csv_path)
        for col, data in report.columns.items():
            result.add_check(
                f"{name} {col} decreases",
                data["decreasing"] and data["finite"],
                f"{data['initial']:.5g} -> {data['final']:.5g}",
            )
        save_convergence_plot(csv_path, run / "convergence.png")
    result.metrics = {k: str(v) for k, v in runs.items()}
    return result


def recipe_svhn_smoke(out_root: Path, data_root: Path) -> RecipeResult:
    """Criterion 9: ingestion filters and resizing on a 100-image archive."""
    from .svhn import IngestStats, ingest_svhn, synthesize_archive

    result = RecipeResult("svhn-smoke", True)
    archive = Path(data_root) / "svhn_fixture"
    expected = synthesize_archive(archive / "test", n_images=100, seed=23)

    stats = IngestStats()
    records = list(ingest_svhn(archive / "test", "test", stats=stats))
    result.metrics = {
        "expected": expected,
        "kept": stats.kept,
        "excluded_count": stats.excluded_count,
        "excluded_small_box": stats.excluded_small_box,
        "skipped_corrupt": stats.skipped_corrupt,
    }
    result.add_check("kept matches audit", stats.kept == expected["kept_test"], f"{stats.kept} vs {expected['kept_test']}")
    result.add_check(
        "count-filter exclusions match audit",
        stats.excluded_count == expected["wrong_count"],
        f"{stats.excluded_count} vs {expected['wrong_count']}",
    )
    result.add_check(
        "small-box exclusions match audit",
        stats.excluded_small_box == expected["small_box"],
        f"{stats.excluded_small_box} vs {expected['small_box']}",
    )
    result.add_check(
        "corrupt records skipped and counted",
        stats.skipped_corrupt == expected["corrupt"],
        f"{stats.skipped_corrupt} vs {expected['corrupt']}",
    )
    shapes_ok = all(r.image.shape == (60, 240, 3) for r in records)
    result.add_check("all kept images resized to 60x240", shapes_ok)
    bounds_ok = True
    for r in records:
        try:
            r.validate()
        except ValueError:
            bounds_ok = False
    result.add_check("boxes rescaled within bounds", bounds_ok)
    return result


RECIPES = {
    "roundtrip": recipe_roundtrip,
    "nms-oracle": recipe_nms_oracle,
    "gradients": recipe_gradients,
    "mnist-easy": recipe_mnist_easy,
    "mnist-hard": recipe_mnist_hard,
    "k-sensitivity": recipe_k_sensitivity,
    "gabor": recipe_gabor,
    "convergence": recipe_convergence,
    "svhn-smoke": recipe_svhn_smoke,
}


def run_recipe(name: str, out_root: Path | str, data_root: Path | str) -> RecipeResult:
    if name not in RECIPES:
        raise KeyError(f"unknown recipe {name!r}; available: {', '.join(sorted(RECIPES))}")
    out_root = Path(out_root)
    data_root = Path(data_root)
    out_root.mkdir(parents=True, exist_ok=True)
    data_root.mkdir(parents=True, exist_ok=True)
    result = RECIPES[name](out_root, data_root)
    with open(out_root / f"result_{name}.json", "w") as f:
        json.dump(result.to_json(), f, indent=2, default=str)
    for line in result.checks:
        print(line)
    return result
