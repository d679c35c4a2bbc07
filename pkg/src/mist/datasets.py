"""Config-driven dataset materialization with on-disk caching.

Datasets land under ``<root>/<dataset>_<param-hash>/<split>/`` so different
parameterizations never collide; regeneration is skipped when the split
already exists.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path

from .config import DataConfig, ExperimentConfig
from .digits import render_digit_bank
from .records import Dataset, write_records
from .scenes import GaborSpec, make_gabor, make_mnist_easy, make_mnist_hard
from .svhn import IngestStats, ingest_svhn

log = logging.getLogger(__name__)


def data_signature(data: DataConfig, seed: int) -> str:
    blob = json.dumps({**asdict(data), "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:10]


def dataset_root(data: DataConfig, seed: int, base: Path | str | None = None) -> Path:
    base = Path(base) if base is not None else Path(data.root)
    return base / f"{data.dataset}_{data_signature(data, seed)}"


def _record_stream(data: DataConfig, split: str, seed: int):
    split_seed = seed * 2 + (0 if split == "train" else 1)
    n = data.train_size if split == "train" else data.test_size
    if data.dataset in ("mnist_easy", "mnist_hard"):
        bank = render_digit_bank(data.digits_per_class + data.digit_test_per_class, seed)
        train_bank, test_bank = bank.split(data.digit_test_per_class, seed)
        use = train_bank if split == "train" else test_bank
        if data.dataset == "mnist_easy":
            jitter = None if data.jitter_sigma < 0 else data.jitter_sigma
            return make_mnist_easy(use, data.canvas, data.grid, n, split_seed, jitter)
        counts = range(data.count_min, data.count_max + 1)
        return make_mnist_hard(use, data.canvas, counts, data.min_separation, n, split_seed)
    if data.dataset == "gabor":
        spec = GaborSpec(
            envelope_width=data.gabor_envelope,
            frequency=data.gabor_frequency,
            orientation=data.gabor_orientation,
            support=data.gabor_support,
        )
        return make_gabor(spec, data.canvas, data.impulses, n, split_seed)
    if data.dataset == "svhn":
        if not data.svhn_dir:
            raise ValueError("data.svhn_dir must point at an extracted archive directory")
        stats = IngestStats()
        src = Path(data.svhn_dir) / split
        stream = ingest_svhn(src, split, stats=stats)

        def limited():
            for i, rec in enumerate(stream):
                if i >= n:
                    break
                yield rec
            log.info("%s ingest: %s", split, stats)

        return limited()
    raise ValueError(f"unknown dataset {data.dataset!r}")


def ensure_split(data: DataConfig, split: str, seed: int, base: Path | str | None = None, force: bool = False) -> Dataset:
    """Generate (or reuse) one split and return a reader over it."""
    root = dataset_root(data, seed, base)
    marker = root / split / "index.json"
    if force or not marker.exists():
        log.info("generating %s/%s", root.name, split)
        count = write_records(root, split, _record_stream(data, split, seed), meta={**asdict(data), "seed": seed, "split": split})
        log.info("wrote %d records to %s", count, root / split)
    return Dataset(root, split)


def ensure_datasets(cfg: ExperimentConfig, base: Path | str | None = None, force: bool = False) -> tuple[Dataset, Dataset]:
    train = ensure_split(cfg.data, "train", cfg.seed, base, force)
    test = ensure_split(cfg.data, "test", cfg.seed, base, force)
    return train, test
