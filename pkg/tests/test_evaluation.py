"""Checkpoint bundle and evaluation loop tests."""

import numpy as np
import pytest
import torch

from mist.config import ExperimentConfig
from mist.datasets import ensure_datasets
from mist.evaluation import ModelBundle, evaluate_detection, evaluate_reconstruction
from mist.training import train

from test_training import tiny_config


@pytest.fixture(scope="module")
def trained_recon(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("evalr")
    cfg = tiny_config(tmp)
    cfg.train.iterations = 2
    train_set, test_set = ensure_datasets(cfg)
    ckpt = train(cfg, tmp / "run", train_set, test_set)
    return cfg, ckpt, test_set


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("eval")
    cfg = tiny_config(tmp, task="classify")
    cfg.data.dataset = "mnist_hard"
    cfg.data.canvas = 128
    cfg.data.count_min, cfg.data.count_max = 3, 4
    cfg.train.k = 4
    cfg.train.iterations = 2
    train_set, test_set = ensure_datasets(cfg)
    ckpt = train(cfg, tmp / "run", train_set, test_set)
    return cfg, ckpt, test_set


class TestModelBundle:
    def test_checkpoint_round_trip(self, trained):
        cfg, ckpt, test_set = trained
        bundle = ModelBundle.from_checkpoint(ckpt)
        assert bundle.cfg.train.k == cfg.train.k
        assert bundle.cfg.scales.S == cfg.scales.S
        assert bundle.kind == "mist"

    def test_detect_shapes(self, trained):
        _, ckpt, test_set = trained
        bundle = ModelBundle.from_checkpoint(ckpt)
        rec = test_set[0]
        dets = bundle.detect(torch.from_numpy(rec.image).permute(2, 0, 1), k=3)
        assert len(dets) == 3
        for d in dets:
            assert d.box[2] == d.box[3]  # square windows
            assert 0 <= d.label <= 9
            assert np.isfinite(d.confidence)

    def test_detection_confidences_descend(self, trained):
        _, ckpt, test_set = trained
        bundle = ModelBundle.from_checkpoint(ckpt)
        rec = test_set[0]
        dets = bundle.detect(torch.from_numpy(rec.image).permute(2, 0, 1), k=4)
        confs = [d.confidence for d in dets]
        assert confs == sorted(confs, reverse=True)

    def test_reconstruct_shape(self, trained_recon):
        _, ckpt, test_set = trained_recon
        bundle = ModelBundle.from_checkpoint(ckpt)
        rec = test_set[0]
        image = torch.from_numpy(rec.image).permute(2, 0, 1)
        recon, kps = bundle.reconstruct(image, k=4)
        assert recon.shape == image.shape
        assert kps is not None and len(kps) == 4

    def test_reconstruct_rejected_for_classifier(self, trained):
        _, ckpt, test_set = trained
        bundle = ModelBundle.from_checkpoint(ckpt)
        image = torch.from_numpy(test_set[0].image).permute(2, 0, 1)
        with pytest.raises(ValueError, match="no decoder"):
            bundle.reconstruct(image, k=2)


class TestEvaluationLoops:
    def test_evaluate_detection_uses_gt_counts(self, trained):
        _, ckpt, test_set = trained
        bundle = ModelBundle.from_checkpoint(ckpt)
        out = evaluate_detection(bundle, test_set, iou_thresholds=(0.0, 0.5), limit=3)
        assert out["n_instances"] == sum(test_set[i].count for i in range(3))
        assert 0.0 <= out["detection_rate"] <= 1.0
        assert "ap_iou_0.5" in out and "ap_iou_0" in out

    def test_detections_csv_export(self, trained, tmp_path):
        _, ckpt, test_set = trained
        bundle = ModelBundle.from_checkpoint(ckpt)
        path = tmp_path / "dets.csv"
        evaluate_detection(bundle, test_set, limit=2, detections_csv=path)
        rows = path.read_text().splitlines()
        assert rows[0] == "image,x,y,side,label,confidence"
        assert len(rows) > 1

    def test_evaluate_reconstruction_bounds(self, trained_recon):
        _, ckpt, test_set = trained_recon
        bundle = ModelBundle.from_checkpoint(ckpt)
        out = evaluate_reconstruction(bundle, test_set, k=4, limit=2)
        assert out["n"] == 2
        assert np.isfinite(out["rmse"]) and out["rmse"] >= 0
