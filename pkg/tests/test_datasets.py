"""Config-driven dataset materialization and caching."""

import numpy as np

from mist.config import ExperimentConfig
from mist.datasets import data_signature, dataset_root, ensure_datasets, ensure_split


def _cfg(tmp_path):
    cfg = ExperimentConfig(seed=3)
    cfg.data.root = str(tmp_path / "data")
    cfg.data.train_size = 6
    cfg.data.test_size = 3
    cfg.data.digits_per_class = 6
    cfg.data.digit_test_per_class = 2
    return cfg


class TestDatasets:
    def test_signature_changes_with_params(self, tmp_path):
        cfg = _cfg(tmp_path)
        a = data_signature(cfg.data, cfg.seed)
        cfg.data.canvas = 128
        assert data_signature(cfg.data, cfg.seed) != a
        assert data_signature(cfg.data, cfg.seed + 1) != data_signature(cfg.data, cfg.seed)

    def test_generation_and_cache_reuse(self, tmp_path):
        cfg = _cfg(tmp_path)
        train_set, test_set = ensure_datasets(cfg)
        assert len(train_set) == 6
        assert len(test_set) == 3
        root = dataset_root(cfg.data, cfg.seed)
        stamp = (root / "train" / "images.bin").stat().st_mtime_ns
        train2, _ = ensure_datasets(cfg)  # cached: no regeneration
        assert (root / "train" / "images.bin").stat().st_mtime_ns == stamp
        np.testing.assert_array_equal(train2[0].image, train_set[0].image)

    def test_train_test_streams_differ(self, tmp_path):
        cfg = _cfg(tmp_path)
        train_set, test_set = ensure_datasets(cfg)
        assert not np.array_equal(train_set[0].image, test_set[0].image)

    def test_force_regenerates_identically(self, tmp_path):
        cfg = _cfg(tmp_path)
        train_set, _ = ensure_datasets(cfg)
        img = train_set[1].image.copy()
        train2 = ensure_split(cfg.data, "train", cfg.seed, force=True)
        np.testing.assert_array_equal(train2[1].image, img)

    def test_record_provenance_in_meta(self, tmp_path):
        cfg = _cfg(tmp_path)
        train_set, _ = ensure_datasets(cfg)
        rec = train_set[0]
        assert "exemplars" in rec.meta
        assert len(rec.meta["exemplars"]) == rec.count
