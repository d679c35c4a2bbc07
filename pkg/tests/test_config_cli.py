"""Config parsing, overrides, and CLI surface tests."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from mist.config import ExperimentConfig, apply_overrides, config_hash, load_config, save_config


class TestConfig:
    def test_defaults_are_mnist_easy_reconstruction(self):
        cfg = load_config(None)
        assert cfg.data.dataset == "mnist_easy"
        assert cfg.task == "reconstruct"
        assert cfg.effective_model == "mist"
        assert cfg.scales.S == 3
        assert cfg.heatmap.window == 15

    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        assert load_config(path) == ExperimentConfig()

    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(name="rt", task="classify", seed=11)
        cfg.scales.S = 2
        cfg.train.penalty_weight = 2.5
        cfg.train.share_task_forward = True
        path = tmp_path / "rt.cfg"
        save_config(cfg, path)
        loaded = load_config(path)
        assert loaded == cfg

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "a.cfg"
        path.write_text("[scales]\nS = 2\n")
        cfg = load_config(path)
        assert cfg.scales.S == 2
        cfg = apply_overrides(cfg, ["scales.S=4", "train.k=5", "experiment.seed=3"])
        assert cfg.scales.S == 4
        assert cfg.train.k == 5
        assert cfg.seed == 3

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[scales]\nbogus = 1\n")
        with pytest.raises(KeyError):
            load_config(path)
        with pytest.raises(KeyError):
            apply_overrides(ExperimentConfig(), ["scales.bogus=1"])

    def test_validation(self):
        cfg = ExperimentConfig()
        cfg.task = "nonsense"
        with pytest.raises(ValueError):
            cfg.validate()

    def test_baseline_kind_selects_model(self):
        cfg = ExperimentConfig()
        cfg.baseline.kind = "grid"
        assert cfg.effective_model == "grid"

    def test_hash_tracks_changes(self):
        a = ExperimentConfig()
        b = ExperimentConfig()
        assert config_hash(a) == config_hash(b)
        b.train.k = 11
        assert config_hash(a) != config_hash(b)


def _run_cli(args, cwd, env_extra=None):
    import os

    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "mist.cli", *args],
        cwd=cwd, capture_output=True, text=True, env=env, timeout=900,
    )


@pytest.fixture(scope="module")
def tiny_cfg_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "tiny.cfg"
    cfg.write_text(
        "\n".join(
            [
                "[experiment]",
                "name = clitiny",
                "[data]",
                "canvas = 96",
                "train_size = 8",
                "test_size = 4",
                "digits_per_class = 6",
                "digit_test_per_class = 2",
                "[scales]",
                "S = 2",
                "[heatmap]",
                "channels = 8",
                "blocks = 1",
                "[task]",
                "base_channels = 2",
                "bottleneck = 16",
                "[train]",
                "k = 4",
                "batch_size = 2",
                "iterations = 2",
                "log_every = 1",
                "eval_every = 1000000",
                "checkpoint_every = 1000000",
            ]
        )
    )
    return d


class TestCli:
    def test_unknown_flag_nonzero_exit(self, tiny_cfg_file):
        out = _run_cli(["train", "--bogus"], tiny_cfg_file)
        assert out.returncode != 0

    def test_malformed_config_nonzero_exit(self, tiny_cfg_file):
        bad = tiny_cfg_file / "bad.cfg"
        bad.write_text("[scales]\nbogus = 1\n")
        out = _run_cli(["train", "--config", str(bad)], tiny_cfg_file)
        assert out.returncode == 1
        assert "error" in out.stderr

    def test_missing_checkpoint_nonzero_exit(self, tiny_cfg_file):
        out = _run_cli(["eval", "--checkpoint", "nope.pt"], tiny_cfg_file)
        assert out.returncode == 1
        assert "does not exist" in out.stderr

    def test_generate_train_eval_visualize(self, tiny_cfg_file):
        d = tiny_cfg_file
        out = _run_cli(["generate-data", "--config", "tiny.cfg"], d)
        assert out.returncode == 0, out.stderr
        assert "train: 8 records" in out.stdout

        out = _run_cli(["train", "--config", "tiny.cfg", "--run-dir", "run1"], d)
        assert out.returncode == 0, out.stderr
        assert (d / "run1" / "checkpoint_last.pt").exists()
        assert (d / "run1" / "metrics.csv").exists()
        assert (d / "run1" / "config.ini").exists()

        out = _run_cli(["eval", "--checkpoint", "run1/checkpoint_last.pt", "--limit", "2"], d)
        assert out.returncode == 0, out.stderr
        assert (d / "run1" / "eval_results.json").exists()
        results = json.loads((d / "run1" / "eval_results.json").read_text())
        assert "reconstruction" in results

        out = _run_cli(["visualize", "--checkpoint", "run1/checkpoint_last.pt", "--count", "1"], d)
        assert out.returncode == 0, out.stderr
        figs = d / "run1" / "figures"
        assert (figs / "panel_0.png").exists()
        assert (figs / "convergence.png").exists()

    def test_train_determinism_across_processes(self, tiny_cfg_file):
        d = tiny_cfg_file
        logs = []
        for run in ("det_a", "det_b"):
            out = _run_cli(["train", "--config", "tiny.cfg", "--run-dir", run, "--seed", "9"], d)
            assert out.returncode == 0, out.stderr
            rows = (d / run / "metrics.csv").read_text().splitlines()
            logs.append([",".join(r.split(",")[:-1]) for r in rows])  # drop wall_time
        assert logs[0] == logs[1]

    def test_output_root_env_override(self, tiny_cfg_file):
        d = tiny_cfg_file
        out = _run_cli(
            ["train", "--config", "tiny.cfg"], d, env_extra={"MIST_OUTPUT_ROOT": str(d / "elsewhere")}
        )
        assert out.returncode == 0, out.stderr
        assert list((d / "elsewhere").glob("clitiny_*/checkpoint_last.pt"))

    def test_reproduce_roundtrip_recipe(self, tiny_cfg_file):
        out = _run_cli(["reproduce", "roundtrip", "--out", "rp", "--data-root", "rpd"], tiny_cfg_file)
        assert out.returncode == 0, out.stderr
        assert "[PASS] roundtrip" in out.stdout
        assert (tiny_cfg_file / "rp" / "result_roundtrip.json").exists()
