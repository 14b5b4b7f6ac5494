"""Metric and rollout tests, anchored by the simulator-as-oracle closure."""

import math

import numpy as np
import pytest

from phasefrac import datagen, evaluation, models
from phasefrac.datagen import GenConfig
from phasefrac.evaluation import OracleModel, mape, r_squared
from test_models import random_batch, unit_norm


@pytest.fixture(scope="module")
def small_ductile():
    return datagen.generate_dataset(GenConfig(mode="ductile", seed=5, n_steps=60), "full")


@pytest.fixture(scope="module")
def small_brittle():
    return datagen.generate_dataset(GenConfig(mode="brittle", seed=5, n_steps=50), "full")


class TestRSquared:
    def test_perfect(self):
        assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_mean_predictor_scores_zero(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r_squared(y, np.full(3, y.mean())) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        # SS_res = 1, SS_tot = 2
        assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 2.0]) == pytest.approx(0.5)

    def test_can_be_negative(self):
        assert r_squared([1.0, 2.0, 3.0], [3.0, 3.0, -2.0]) < 0.0

    def test_constant_target_sentinel(self):
        assert math.isnan(r_squared([2.0, 2.0], [1.0, 3.0]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            r_squared([1.0], [1.0, 2.0])


class TestMape:
    def test_perfect(self):
        assert mape([2.0, 4.0], [2.0, 4.0]) == 0.0

    def test_hand_value(self):
        assert mape([2.0, 4.0], [1.0, 5.0]) == pytest.approx(37.5)

    def test_floor_excludes_small_targets(self):
        got = mape([1e-9, 2.0], [5.0, 1.0], floor=1e-6)
        assert got == pytest.approx(50.0)

    def test_all_below_floor_sentinel(self):
        assert math.isnan(mape([1e-9, 1e-8], [1.0, 1.0], floor=1e-6))

    def test_reorder_invariance(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(0.5, 2.0, 20)
        yhat = y + rng.normal(scale=0.1, size=20)
        perm = rng.permutation(20)
        assert mape(y, yhat) == pytest.approx(mape(y[perm], yhat[perm]), rel=1e-12)
        assert r_squared(y, yhat) == pytest.approx(r_squared(y[perm], yhat[perm]), rel=1e-12)


class TestRollout:
    def test_naive_shapes(self, small_ductile):
        ds = small_ductile
        model = models.make_naive_model(ds.norm, seed=0)
        rows = ds.path_rows(ds.test_path_id("interp"))
        roll = evaluation.rollout(model, rows, "teacher_forced")
        assert roll.quantities == ("sigma",)
        assert roll.pred["sigma"].shape == rows["eps_next"].shape

    def test_autoregressive_respects_model_invariants(self, small_ductile):
        ds = small_ductile
        rows = ds.path_rows(ds.test_path_id("upper"))
        for seed in range(3):
            model = models.make_energy_model(ds.norm, seed=seed, plastic=True)
            for w in model.state_params.weights:
                w *= 4.0  # arbitrary parameters, not trained
            roll = evaluation.rollout(model, rows, "autoregressive")
            assert np.all((roll.pred["d"] >= 0.0) & (roll.pred["d"] <= 1.0))
            assert np.all(roll.pred["D"] >= 0.0)
            for q in roll.quantities:
                assert np.all(np.isfinite(roll.pred[q])), q

    def test_bad_mode(self, small_ductile):
        ds = small_ductile
        model = models.make_naive_model(ds.norm, seed=0)
        with pytest.raises(ValueError):
            evaluation.rollout(model, ds.path_rows(20), "open_loop")


class TestOracleClosure:
    @pytest.mark.parametrize("fixture", ["small_ductile", "small_brittle"])
    def test_exact_closure_both_modes(self, fixture, request):
        ds = request.getfixturevalue(fixture)
        oracle = OracleModel.from_dataset(ds)
        report = evaluation.evaluate(oracle, ds)
        for scenario in datagen.SCENARIOS:
            for mode in evaluation.MODES:
                for q in evaluation.ENERGY_QUANTITIES:
                    r2 = report.metric(scenario, mode, q, "r2")
                    mp = report.metric(scenario, mode, q, "mape")
                    if math.isnan(r2):  # constant series (eps_p in brittle)
                        continue
                    assert r2 == 1.0, (scenario, mode, q)
                    assert mp == 0.0 or math.isnan(mp), (scenario, mode, q)

    def test_closure_survives_csv_round_trip(self, small_ductile, tmp_path):
        csv_path, _ = datagen.save_dataset(small_ductile, tmp_path / "ds.csv")
        loaded = datagen.load_dataset(csv_path)
        oracle = OracleModel.from_dataset(loaded)
        report = evaluation.evaluate(oracle, loaded, modes=("autoregressive",))
        assert report.metric("interp", "autoregressive", "sigma", "r2") == 1.0


class TestEvaluate:
    def test_report_grid_complete(self, small_ductile):
        ds = small_ductile
        model = models.make_energy_model(ds.norm, seed=1, plastic=True)
        report = evaluation.evaluate(model, ds)
        assert set(report.entries) == set(datagen.SCENARIOS)
        for scenario in datagen.SCENARIOS:
            assert set(report.entries[scenario]) == set(evaluation.MODES)
            for mode in evaluation.MODES:
                assert set(report.entries[scenario][mode]) == set(evaluation.ENERGY_QUANTITIES)
                for q in evaluation.ENERGY_QUANTITIES:
                    for name in ("r2", "mape", "onset_r2", "onset_mape"):
                        assert name in report.entries[scenario][mode][q]

    def test_report_save(self, small_ductile, tmp_path):
        ds = small_ductile
        model = models.make_naive_model(ds.norm, seed=1)
        report = evaluation.evaluate(model, ds, info={"seed": 1})
        path = report.save(tmp_path / "report.json")
        text = path.read_text()
        assert '"dataset_mode": "ductile"' in text
        assert path.read_bytes() == report.save(tmp_path / "again.json").read_bytes()

    def test_predictions_csv(self, small_ductile, tmp_path):
        ds = small_ductile
        model = models.make_energy_model(ds.norm, seed=2, plastic=True)
        path = evaluation.save_predictions_csv(model, ds, "lower", tmp_path / "pred.csv")
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["step", "eps"]
        assert "gt_sigma" in header and "tf_sigma" in header and "ar_sigma" in header
        assert len(lines) == 1 + 60

    def test_aggregate_error_prefers_perfect(self, small_ductile):
        oracle = OracleModel.from_dataset(small_ductile)
        report = evaluation.evaluate(oracle, small_ductile)
        assert evaluation.aggregate_error(report, "autoregressive") == pytest.approx(0.0, abs=1e-12)
