"""Rollout of trained surrogates along test paths and the metric grid.

Two rollout modes: ``teacher_forced`` feeds ground-truth previous-step values
into every prediction; ``autoregressive`` seeds step 0 from ground truth and
then feeds the model its own previous predictions (the strain schedule always
comes from the path definition).  Metrics are computed on normalized series:
R-squared is affine-invariant so this changes nothing for it, and it gives
the MAPE floor a single well-defined unit.

``OracleModel`` wraps the reference integrator behind the same prediction
interface; it closes the loop exactly (R2 = 1, MAPE = 0) in both modes and
guards the whole evaluation plumbing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import material, models
from .datagen import Dataset, SCENARIOS
from .material import MaterialParams, MaterialState

MODES = ("teacher_forced", "autoregressive")

# quantities a rollout can produce, with the norm scale each one uses
QUANTITY_SCALE = {"sigma": "sigma", "psi": "psi", "d": "d", "D": "D", "eps_p": "eps_p"}
ENERGY_QUANTITIES = ("sigma", "psi", "d", "D", "eps_p")
NAIVE_QUANTITIES = ("sigma",)

UNDEFINED = float("nan")  # sentinel for metrics without a defined value


def r_squared(y, yhat) -> float:
    """1 - SS_res/SS_tot; NaN sentinel when the target series is constant."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.size == 0:
        raise ValueError("series must share a nonzero length")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return UNDEFINED
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def mape(y, yhat, floor: float = 1e-6) -> float:
    """Mean |y-yhat|/|y| in percent over entries with |y| >= floor."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.size == 0:
        raise ValueError("series must share a nonzero length")
    keep = np.abs(y) >= floor
    if not np.any(keep):
        return UNDEFINED
    return float(np.mean(np.abs(y[keep] - yhat[keep]) / np.abs(y[keep])) * 100.0)


class OracleModel:
    """The reference integrator exposed as a prediction model.

    Carries its own exact state along the ground-truth strain schedule, so
    its outputs coincide with the data in both rollout modes.
    """

    quantities = ENERGY_QUANTITIES

    def __init__(self, zeta: float = 1.0, h: float = 0.0, eta_p: float = 0.0,
                 eta_d: float = 0.0, history_normalized: bool = False):
        self.zeta = zeta
        self.h = h
        self.eta_p = eta_p
        self.eta_d = eta_d
        self.history_normalized = history_normalized
        self._params: MaterialParams | None = None
        self._state: MaterialState | None = None
        self._dt = 1.0

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "OracleModel":
        gen = dataset.meta.get("gen", {})
        return cls(
            zeta=gen.get("zeta", 1.0),
            h=gen.get("h", 0.0),
            eta_p=gen.get("eta_p", 0.0),
            eta_d=gen.get("eta_d", 0.0),
            history_normalized=gen.get("history_normalized", False),
        )

    def begin_path(self, rows: dict) -> None:
        self._params = MaterialParams(
            E=float(rows["E"][0]),
            y0=float(rows["y0"][0]),
            psi_c=float(rows["psi_c"][0]),
            zeta=self.zeta,
            h=self.h,
            eta_p=self.eta_p,
            eta_d=self.eta_d,
        )
        self._state = MaterialState()
        self._dt = 1.0 / rows["eps_next"].size

    def predict_step(self, inputs: dict) -> dict:
        self._state = material.step(
            self._state, float(inputs["eps_next"][0]), self._dt, self._params,
            self.history_normalized,
        )
        s = self._state
        one = lambda x: np.array([x])  # noqa: E731
        return {
            "sigma_next": one(s.sigma),
            "psi_next": one(s.psi_e_stored),
            "d_next": one(s.d),
            "eps_p_next": one(s.eps_p),
            "f_d": one(2.0 * (1.0 - s.d) * s.psi_e_eff),
            "D_override": (one(s.D_p), one(s.D_d)),
        }


@dataclass
class PathRollout:
    quantities: tuple[str, ...]
    pred: dict[str, np.ndarray]
    gt: dict[str, np.ndarray]
    eps: np.ndarray
    steps: np.ndarray


def _ground_truth_series(rows: dict, quantities) -> dict[str, np.ndarray]:
    gt = {}
    for q in quantities:
        if q == "D":
            gt[q] = rows["D_p_next"] + rows["D_d_next"]
        else:
            gt[q] = rows[f"{q}_next"]
    return gt


def rollout(model, rows: dict, mode: str) -> PathRollout:
    """Predict every transition of one path's ground-truth rows."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    n = rows["eps_next"].size
    is_naive = isinstance(model, models.NaiveStressModel)
    is_energy = isinstance(model, models.EnergyModel)
    is_oracle = isinstance(model, OracleModel)
    if not (is_naive or is_energy or is_oracle):
        raise TypeError(f"cannot roll out {type(model)!r}")
    quantities = NAIVE_QUANTITIES if is_naive else ENERGY_QUANTITIES

    if is_oracle:
        model.begin_path(rows)

    teacher = mode == "teacher_forced"
    pred: dict[str, list[float]] = {q: [] for q in quantities}
    # step-0 feedback state comes from ground truth (the virgin state)
    fb = {key: float(rows[key][0]) for key in ("eps_p_n", "sigma_n", "d_n", "D_p_n", "D_d_n")}

    for k in range(n):
        if teacher:
            fb = {key: float(rows[key][k]) for key in fb}
        inputs = {
            "eps_next": rows["eps_next"][k : k + 1],
            "eps_n": rows["eps_n"][k : k + 1],
            "E": rows["E"][k : k + 1],
            "eps_p_n": np.array([fb["eps_p_n"]]),
            "sigma_n": np.array([fb["sigma_n"]]),
            "d_n": np.array([fb["d_n"]]),
            "D_p_n": np.array([fb["D_p_n"]]),
            "D_d_n": np.array([fb["D_d_n"]]),
        }
        if is_naive:
            sigma = float(models.naive_predict(model, inputs)[0])
            pred["sigma"].append(sigma)
            fb = {**fb, "sigma_n": sigma}
            continue

        if is_energy:
            out = models.energy_forward(model, inputs)
            upd = models.dissipation_update(
                inputs["D_d_n"], inputs["D_p_n"], out, inputs["eps_p_n"], inputs["d_n"]
            )
            d_p, d_d = float(upd["D_p"][0]), float(upd["D_d"][0])
        else:  # oracle
            out = model.predict_step(inputs)
            d_p, d_d = (float(a[0]) for a in out["D_override"])

        pred["sigma"].append(float(out["sigma_next"][0]))
        pred["psi"].append(float(out["psi_next"][0]))
        pred["d"].append(float(out["d_next"][0]))
        pred["eps_p"].append(float(out["eps_p_next"][0]))
        pred["D"].append(max(0.0, d_p) + max(0.0, d_d))
        fb = {
            "eps_p_n": float(out["eps_p_next"][0]),
            "sigma_n": float(out["sigma_next"][0]),
            "d_n": float(out["d_next"][0]),
            "D_p_n": d_p,
            "D_d_n": d_d,
        }

    return PathRollout(
        quantities=quantities,
        pred={q: np.array(v) for q, v in pred.items()},
        gt=_ground_truth_series(rows, quantities),
        eps=rows["eps_next"].copy(),
        steps=rows["step"].copy(),
    )


@dataclass
class EvalReport:
    dataset_mode: str
    variant: str
    quantities: tuple[str, ...]
    modes: tuple[str, ...]
    entries: dict = field(default_factory=dict)  # scenario -> mode -> quantity -> metrics
    info: dict = field(default_factory=dict)

    def metric(self, scenario: str, mode: str, quantity: str, name: str) -> float:
        return self.entries[scenario][mode][quantity][name]

    def to_dict(self) -> dict:
        return {
            "dataset_mode": self.dataset_mode,
            "variant": self.variant,
            "quantities": list(self.quantities),
            "modes": list(self.modes),
            "scenarios": self.entries,
            "info": self.info,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        return path


def _metrics_for(norm, quantity: str, gt: np.ndarray, pred: np.ndarray,
                 onset: int | None, window: int, floor: float) -> dict:
    scale = QUANTITY_SCALE[quantity]
    y = np.asarray(norm.apply(scale, gt))
    yhat = np.asarray(norm.apply(scale, pred))
    out = {"r2": r_squared(y, yhat), "mape": mape(y, yhat, floor)}
    if onset is None:
        out["onset_r2"] = UNDEFINED
        out["onset_mape"] = UNDEFINED
    else:
        lo = max(0, onset - window)
        hi = min(y.size, onset + window + 1)
        out["onset_r2"] = r_squared(y[lo:hi], yhat[lo:hi])
        out["onset_mape"] = mape(y[lo:hi], yhat[lo:hi], floor)
    return out


def evaluate(model, dataset: Dataset, modes=MODES, onset_window: int = 5,
             mape_floor: float = 1e-6, info: dict | None = None) -> EvalReport:
    """Full metric grid over the three test scenarios."""
    quantities = NAIVE_QUANTITIES if isinstance(model, models.NaiveStressModel) else ENERGY_QUANTITIES
    report = EvalReport(
        dataset_mode=dataset.mode,
        variant=dataset.variant,
        quantities=tuple(quantities),
        modes=tuple(modes),
        info=info or {},
    )
    for scenario in SCENARIOS:
        rows = dataset.path_rows(dataset.test_path_id(scenario))
        d_gt = rows["d_next"]
        onset_idx = int(np.argmax(d_gt > 0.0)) if np.any(d_gt > 0.0) else None
        report.entries[scenario] = {}
        for mode in modes:
            roll = rollout(model, rows, mode)
            report.entries[scenario][mode] = {
                q: _metrics_for(dataset.norm, q, roll.gt[q], roll.pred[q],
                                onset_idx, onset_window, mape_floor)
                for q in quantities
            }
    return report


def save_predictions_csv(model, dataset: Dataset, scenario: str, path: str | Path,
                         modes=MODES) -> Path:
    """Per-step ground truth and predictions of one scenario, all modes."""
    rows = dataset.path_rows(dataset.test_path_id(scenario))
    rolls = {mode: rollout(model, rows, mode) for mode in modes}
    quantities = next(iter(rolls.values())).quantities
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["step", "eps"]
    header += [f"gt_{q}" for q in quantities]
    prefix = {"teacher_forced": "tf", "autoregressive": "ar"}
    for mode in modes:
        header += [f"{prefix[mode]}_{q}" for q in quantities]
    some = rolls[modes[0]]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(some.eps.size):
            cells = [str(int(some.steps[i])), "%.17g" % some.eps[i]]
            cells += ["%.17g" % some.gt[q][i] for q in quantities]
            for mode in modes:
                cells += ["%.17g" % rolls[mode].pred[q][i] for q in quantities]
            fh.write(",".join(cells) + "\n")
    return path


def aggregate_error(report: EvalReport, mode: str) -> float:
    """Mean (1 - R2) across scenarios and quantities for one rollout mode."""
    vals = []
    for scenario in SCENARIOS:
        for q in report.quantities:
            r2 = report.metric(scenario, mode, q, "r2")
            if not math.isnan(r2):
                vals.append(1.0 - r2)
    return float(np.mean(vals))
