"""End-to-end CLI tests on miniature configurations."""

import json

import pytest

from phasefrac import bench, cli
from phasefrac.config import ConfigError, apply_overrides, config_hash, load_config, validate


def write_config(tmp_path, **overrides):
    cfg = {
        "mode": "brittle",
        "variant": "full",
        "model": "naive",
        "seed": 1,
        "paths": {
            "dataset": str(tmp_path / "out" / "dataset.csv"),
            "checkpoint": str(tmp_path / "out" / "checkpoint.json"),
            "train_report": str(tmp_path / "out" / "train_report.json"),
            "curves": str(tmp_path / "out" / "curves.csv"),
            "report": str(tmp_path / "out" / "report.json"),
            "predictions_dir": str(tmp_path / "out"),
        },
        "datagen": {"n_steps": 40},
        "train": {"max_epochs": 3, "patience": 3},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            cfg.setdefault(key, {}).update(value)
        else:
            cfg[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestConfig:
    def test_defaults_load_and_hash_stable(self):
        cfg = load_config(None)
        validate(cfg)
        assert config_hash(cfg) == config_hash(load_config(None))

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_overrides_parse_json_values(self):
        cfg = load_config(None)
        apply_overrides(cfg, ["train.max_epochs=7", "mode=ductile", "datagen.history_normalized=false"])
        assert cfg["train"]["max_epochs"] == 7
        assert cfg["mode"] == "ductile"
        assert cfg["datagen"]["history_normalized"] is False

    def test_override_unknown_key(self):
        cfg = load_config(None)
        with pytest.raises(ConfigError):
            apply_overrides(cfg, ["nope.nope=1"])

    def test_hash_changes_with_content(self):
        a = load_config(None)
        b = load_config(None)
        apply_overrides(b, ["seed=9"])
        assert config_hash(a) != config_hash(b)


class TestGenerate:
    def test_writes_dataset_and_reports_counts(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert cli.main(["generate", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "23 paths, 920 rows" in out
        assert (tmp_path / "out" / "dataset.csv").exists()
        assert (tmp_path / "out" / "dataset.meta.json").exists()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["generate", "--config", str(cfg)]) == 0
        csv1 = (tmp_path / "out" / "dataset.csv").read_bytes()
        meta1 = (tmp_path / "out" / "dataset.meta.json").read_bytes()
        assert cli.main(["generate", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "dataset.csv").read_bytes() == csv1
        assert (tmp_path / "out" / "dataset.meta.json").read_bytes() == meta1

    def test_invalid_mode_exits_2(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["generate", "--config", str(cfg), "--set", "mode=squishy"]) == 2

    def test_missing_config_exits_2(self, tmp_path):
        assert cli.main(["generate", "--config", str(tmp_path / "absent.json")]) == 2


class TestTrainEvaluate:
    @pytest.fixture()
    def generated(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["generate", "--config", str(cfg)]) == 0
        return cfg

    def test_missing_dataset_exits_2(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["train", "--config", str(cfg)]) == 2

    def test_train_then_evaluate(self, tmp_path, generated, capsys):
        assert cli.main(["train", "--config", str(generated)]) == 0
        assert (tmp_path / "out" / "checkpoint.json").exists()
        assert (tmp_path / "out" / "train_report.json").exists()
        assert (tmp_path / "out" / "curves.csv").exists()
        assert cli.main(["evaluate", "--config", str(generated)]) == 0
        out = capsys.readouterr().out
        assert "stress R2" in out
        assert (tmp_path / "out" / "report.json").exists()
        for scenario in ("lower", "interp", "upper"):
            assert (tmp_path / "out" / f"predictions_{scenario}.csv").exists()

    def test_energy_model_smoke(self, tmp_path, generated):
        assert cli.main(["train", "--config", str(generated), "--set", "model=energy"]) == 0
        assert cli.main(["evaluate", "--config", str(generated), "--set", "model=energy"]) == 0

    def test_evaluate_reruns_byte_identical(self, tmp_path, generated):
        assert cli.main(["train", "--config", str(generated)]) == 0
        assert cli.main(["evaluate", "--config", str(generated)]) == 0
        report1 = (tmp_path / "out" / "report.json").read_bytes()
        pred1 = (tmp_path / "out" / "predictions_interp.csv").read_bytes()
        assert cli.main(["evaluate", "--config", str(generated)]) == 0
        assert (tmp_path / "out" / "report.json").read_bytes() == report1
        assert (tmp_path / "out" / "predictions_interp.csv").read_bytes() == pred1

    def test_mode_mismatch_exits_2(self, tmp_path, generated):
        assert cli.main(["train", "--config", str(generated)]) == 0
        # regenerate the dataset as ductile; the brittle checkpoint must be refused
        assert cli.main(["generate", "--config", str(generated), "--set", "mode=ductile"]) == 0
        assert cli.main(["evaluate", "--config", str(generated), "--set", "mode=ductile"]) == 2

    def test_missing_checkpoint_exits_2(self, tmp_path, generated):
        assert cli.main(["evaluate", "--config", str(generated)]) == 2


class TestGradcheckCommand:
    def test_passes_and_prints(self, capsys):
        assert cli.main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out
        assert "negative control" in out
        assert "[FAIL]" not in out


class TestBench:
    def test_run_bench_smoke(self):
        lines = bench.run_bench(batch_sizes=(16,), repeats=2)
        assert any("grad_vjp" in line for line in lines)
        assert any("active backend" in line for line in lines)
