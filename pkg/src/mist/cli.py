"""Command-line experiment runner.

Subcommands: generate-data, train, eval, visualize, reproduce. Settings come
from an INI config file plus ``--set section.key=value`` overrides (flags
beat the file, the file beats defaults). ``MIST_OUTPUT_ROOT`` overrides the
output root. Exit codes: 0 ok, 1 error, 2 acceptance threshold failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch
from filelock import FileLock, Timeout

from .config import ExperimentConfig, apply_overrides, config_hash, load_config, save_config
from .datasets import ensure_datasets
from .evaluation import ModelBundle, evaluate_detection, evaluate_reconstruction
from .recipes import RECIPES, run_recipe
from .records import Dataset
from .training import train
from .visualize import save_convergence_plot, save_detection_panel, save_patch_bank

log = logging.getLogger(__name__)


def _output_root(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get("MIST_OUTPUT_ROOT", cfg.output_dir))


def _build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"experiment.seed={args.seed}")
    return apply_overrides(cfg, overrides)


def _run_dir(cfg: ExperimentConfig, args) -> Path:
    root = _output_root(cfg)
    if getattr(args, "run_dir", None):
        return Path(args.run_dir)
    return root / f"{cfg.name}_{config_hash(cfg)}"


def cmd_generate_data(args) -> int:
    cfg = _build_config(args)
    train_set, test_set = ensure_datasets(cfg, args.data_root, force=args.force)
    print(f"train: {len(train_set)} records, test: {len(test_set)} records")
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args)
    run_dir = _run_dir(cfg, args)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.ini")
    lock = FileLock(run_dir / ".lock")
    try:
        with lock.acquire(timeout=1):
            train_set, test_set = ensure_datasets(cfg, args.data_root)
            ckpt = train(cfg, run_dir, train_set, test_set)
    except Timeout:
        print(f"error: another experiment holds {run_dir}/.lock", file=sys.stderr)
        return 1
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        print(f"error: checkpoint {checkpoint} does not exist", file=sys.stderr)
        return 1
    bundle = ModelBundle.from_checkpoint(checkpoint)
    cfg = bundle.cfg
    _, test_set = ensure_datasets(cfg, args.data_root)
    out_dir = checkpoint.parent
    results: dict = {}
    if cfg.task == "reconstruct":
        results["reconstruction"] = evaluate_reconstruction(bundle, test_set, limit=args.limit)
    else:
        results["detection"] = evaluate_detection(
            bundle,
            test_set,
            iou_thresholds=tuple(cfg.eval.thresholds()),
            matching=cfg.eval.matching,
            limit=args.limit,
            detections_csv=out_dir / "detections.csv",
        )
        rates = results["detection"]
        table = [
            ("detection IoU-50", rates["detection_rate"]),
            ("classification", rates["classification_rate"]),
            ("both", rates["both_rate"]),
        ]
        with open(out_dir / "table_rates.csv", "w") as f:
            f.write("metric,value\n")
            for name, value in table:
                f.write(f"{name},{value:.4f}\n")
    with open(out_dir / "eval_results.json", "w") as f:
        json.dump(results, f, indent=2, default=str)
    print(json.dumps(results, indent=2, default=str))
    return 0


def cmd_visualize(args) -> int:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        print(f"error: checkpoint {checkpoint} does not exist", file=sys.stderr)
        return 1
    bundle = ModelBundle.from_checkpoint(checkpoint)
    cfg = bundle.cfg
    _, test_set = ensure_datasets(cfg, args.data_root)
    out_dir = Path(args.out) if args.out else checkpoint.parent / "figures"
    out_dir.mkdir(parents=True, exist_ok=True)
    k = cfg.train.k
    for i in range(min(args.count, len(test_set))):
        rec = test_set[i]
        image = torch.from_numpy(rec.image).permute(2, 0, 1)
        recon, _ = bundle.reconstruct(image, k)
        dets = bundle.detect(image, k) if bundle.kind != "grid" else []
        save_detection_panel(
            rec.image, dets, out_dir / f"panel_{i}.png", gt=rec.instances,
            reconstruction=np.clip(recon.permute(1, 2, 0).numpy(), 0, 1),
        )
        if bundle.kind != "grid":
            save_patch_bank(bundle.decoded_patches(image, k).numpy(), out_dir / f"patches_{i}.png")
    metrics_csv = checkpoint.parent / "metrics.csv"
    if metrics_csv.exists():
        save_convergence_plot(metrics_csv, out_dir / "convergence.png")
    print(f"figures written to {out_dir}")
    return 0


def cmd_reproduce(args) -> int:
    out_root = Path(os.environ.get("MIST_OUTPUT_ROOT", args.out))
    if args.name == "all":
        names = list(RECIPES)
    else:
        names = [args.name]
    ok = True
    for name in names:
        result = run_recipe(name, out_root, args.data_root)
        ok = ok and result.passed
    return 0 if ok else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mist", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", default=None, help="INI config file (optional; defaults run the grid-digit reconstruction recipe)")
            p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--data-root", default="data", help="dataset cache directory")

    p = sub.add_parser("generate-data", help="materialize the configured dataset splits")
    common(p)
    p.add_argument("--force", action="store_true", help="regenerate even if cached")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="run training (resumes from the last checkpoint)")
    common(p)
    p.add_argument("--run-dir", default=None, help="explicit run directory (default: <output>/<name>_<hash>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compute metric tables from a checkpoint")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--limit", type=int, default=None, help="evaluate at most this many test images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("visualize", help="render detection overlays and reconstruction panels")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=4, help="number of test images to render")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("reproduce", help="run a named end-to-end recipe and check its thresholds")
    p.add_argument("name", choices=sorted(RECIPES) + ["all"])
    p.add_argument("--out", default="runs")
    p.add_argument("--data-root", default="data")
    p.set_defaults(func=cmd_reproduce)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
