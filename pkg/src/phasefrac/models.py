"""The two stress surrogates: a direct regressor and an energy-derived model.

``NaiveStressModel`` maps (eps_next, eps_n, sigma_n, E) straight to the next
stress with a relu net and a plain MSE loss.

``EnergyModel`` is structured by the physics: an internal-state net predicts
the next plastic strain and damage (damage through the [0, 1]-clamped head),
an energy net evaluates the free-energy density of the resulting state, and
stress is the exact derivative of that energy with respect to the current
strain.  The damage-conjugate force is the (negative) energy derivative with
respect to the damage input, and both dissipation ledgers are reconstructed
by recursion from the model's own outputs, clamped nonnegative before they
enter the loss.  Training losses are MSEs on normalized quantities with unit
weights; all five terms are optimized jointly for both nets.

Losses and gradients work on "batches": dicts of equal-length float arrays
keyed by dataset column names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend, mlp
from .datagen import NormScales
from .mlp import GradientError, MlpParams, MlpSpec

CHECKPOINT_SCHEMA = 1

NAIVE_FEATURES = ("eps_next", "eps_n", "sigma_n", "E")
STATE_FEATURES = ("eps_next", "eps_n", "eps_p_n", "sigma_n", "d_n", "E")
ENERGY_FEATURES = ("eps_next", "eps_n", "eps_p_n", "eps_p_next", "sigma_n", "d_n", "d_next", "E")

FEATURE_QUANTITY = {
    "eps_next": "eps",
    "eps_n": "eps",
    "eps_p_n": "eps_p",
    "eps_p_next": "eps_p",
    "sigma_n": "sigma",
    "d_n": "d",
    "d_next": "d",
    "E": "E",
}

# energy-net input slots whose derivatives define stress and the damage force
_SLOT_EPS_NEXT = ENERGY_FEATURES.index("eps_next")  # 0
_SLOT_EPS_P_NEXT = ENERGY_FEATURES.index("eps_p_next")  # 3
_SLOT_D_NEXT = ENERGY_FEATURES.index("d_next")  # 6
_ENERGY_DIRS = np.array([_SLOT_EPS_NEXT, _SLOT_D_NEXT], dtype=np.int64)

LOSS_TERMS = ("sigma", "psi", "eps_p", "d", "D")


@dataclass
class NaiveStressModel:
    spec: MlpSpec
    params: MlpParams
    norm: NormScales


@dataclass
class EnergyModel:
    state_spec: MlpSpec
    state_params: MlpParams
    energy_spec: MlpSpec
    energy_params: MlpParams
    norm: NormScales
    plastic: bool


def make_naive_model(norm: NormScales, seed: int) -> NaiveStressModel:
    spec = MlpSpec((4, 16, 8, 1), hidden_activation="relu")
    return NaiveStressModel(spec=spec, params=mlp.init_params(spec, seed), norm=norm)


def make_energy_model(norm: NormScales, seed: int, plastic: bool) -> EnergyModel:
    state_spec = MlpSpec((6, 16, 8, 2), hidden_activation="softplus",
                         output_heads=("identity", "relu_d"))
    energy_spec = MlpSpec((8, 16, 8, 1), hidden_activation="softplus")
    seed_state, seed_energy = np.random.SeedSequence(seed).spawn(2)
    state_params = mlp.init_params(state_spec, seed_state)
    # start the clamped damage head inside its live window (0, 1); a start in
    # a flat region would zero its gradient for every sample and freeze it
    state_params.biases[-1][1] = 0.5
    return EnergyModel(
        state_spec=state_spec,
        state_params=state_params,
        energy_spec=energy_spec,
        energy_params=mlp.init_params(energy_spec, seed_energy),
        norm=norm,
        plastic=plastic,
    )


def _features(norm: NormScales, batch: dict, names: tuple[str, ...]) -> np.ndarray:
    cols = [np.asarray(norm.apply(FEATURE_QUANTITY[name], batch[name]), dtype=np.float64)
            for name in names]
    return np.ascontiguousarray(np.stack(cols, axis=1))


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def naive_predict(model: NaiveStressModel, batch: dict) -> np.ndarray:
    """Next-step stress in physical units [GPa] for each batch row."""
    X = _features(model.norm, batch, NAIVE_FEATURES)
    yhat = backend.forward(model.params.weights, model.params.biases,
                           model.spec.act_id, model.spec.head_ids, X)
    return model.norm.invert("sigma", yhat[:, 0])


def naive_loss_and_grad(model: NaiveStressModel, batch: dict):
    """MSE on normalized stress; returns (loss, flat parameter gradient)."""
    X = _features(model.norm, batch, NAIVE_FEATURES)
    target = model.norm.apply("sigma", batch["sigma_next"])
    n = X.shape[0]
    yhat = backend.forward(model.params.weights, model.params.biases,
                           model.spec.act_id, model.spec.head_ids, X)
    r = yhat[:, 0] - target
    loss = float(np.mean(r * r))
    ybar = (2.0 * r / n)[:, None]
    _, dWs, dbs, _ = backend.vjp(model.params.weights, model.params.biases,
                                 model.spec.act_id, model.spec.head_ids, X, ybar)
    grad = MlpParams(list(dWs), list(dbs)).to_vector()
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise GradientError("non-finite value in the stress-MSE gradient")
    return loss, grad


def naive_loss(model: NaiveStressModel, batch: dict) -> float:
    X = _features(model.norm, batch, NAIVE_FEATURES)
    target = model.norm.apply("sigma", batch["sigma_next"])
    yhat = backend.forward(model.params.weights, model.params.biases,
                           model.spec.act_id, model.spec.head_ids, X)
    r = yhat[:, 0] - target
    return float(np.mean(r * r))


def _energy_core(model: EnergyModel, batch: dict, with_grad: bool, with_targets: bool):
    """Shared forward/loss/gradient plumbing for the energy model.

    Teacher forced: every n-indexed input and both previous dissipation
    accumulators come from the batch (ground truth); only n+1 quantities are
    model outputs.
    """
    norm = model.norm
    n = np.asarray(batch["eps_next"]).shape[0]

    Xa = _features(norm, batch, STATE_FEATURES)
    ya = backend.forward(model.state_params.weights, model.state_params.biases,
                         model.state_spec.act_id, model.state_spec.head_ids, Xa)
    p_hat, d_hat = ya[:, 0], ya[:, 1]
    p_use = p_hat if model.plastic else np.zeros(n)

    Xb = np.ascontiguousarray(np.stack(
        [Xa[:, 0], Xa[:, 1], Xa[:, 2], p_use, Xa[:, 3], Xa[:, 4], d_hat, Xa[:, 5]], axis=1))
    yb, G = backend.forward_grad(model.energy_params.weights, model.energy_params.biases,
                                 model.energy_spec.act_id, model.energy_spec.head_ids,
                                 Xb, _ENERGY_DIRS)
    psi_hat = yb[:, 0]
    g_eps, g_d = G[:, 0, 0], G[:, 0, 1]

    c_sigma = norm.span("psi") / norm.span("eps")
    c_fd = norm.span("psi") / norm.span("d")
    sigma_phys = c_sigma * g_eps
    f_d = -c_fd * g_d
    p_phys = norm.invert("eps_p", p_use)
    d_phys = norm.invert("d", d_hat)

    outputs = {
        "eps_p_next": p_phys,
        "d_next": d_phys,
        "psi_next": norm.invert("psi", psi_hat),
        "sigma_next": sigma_phys,
        "f_d": f_d,
    }
    if not with_targets:
        return outputs, None, None

    dp_raw = batch["D_p_n"] + sigma_phys * (p_phys - batch["eps_p_n"])
    dd_raw = batch["D_d_n"] + f_d * (d_phys - batch["d_n"])
    d_pred = _relu(dp_raw) + _relu(dd_raw)
    d_tgt = _relu(batch["D_p_next"]) + _relu(batch["D_d_next"])

    r_sigma = (sigma_phys - batch["sigma_next"]) / norm.span("sigma")
    r_psi = psi_hat - norm.apply("psi", batch["psi_next"])
    r_p = (p_use - norm.apply("eps_p", batch["eps_p_next"])) if model.plastic else np.zeros(n)
    r_d = d_hat - norm.apply("d", batch["d_next"])
    r_D = (d_pred - d_tgt) / norm.span("D")

    terms = {
        "sigma": float(np.mean(r_sigma**2)),
        "psi": float(np.mean(r_psi**2)),
        "eps_p": float(np.mean(r_p**2)),
        "d": float(np.mean(r_d**2)),
        "D": float(np.mean(r_D**2)),
    }
    if not with_grad:
        return outputs, terms, None

    inv_n = 1.0 / n
    gate_p = (dp_raw > 0.0).astype(np.float64)
    gate_d = (dd_raw > 0.0).astype(np.float64)
    dD = 2.0 * r_D * inv_n / norm.span("D")

    dL_dsigma = 2.0 * r_sigma * inv_n / norm.span("sigma") + dD * gate_p * (p_phys - batch["eps_p_n"])
    dL_dfd = dD * gate_d * (d_phys - batch["d_n"])
    dL_dp_phys = dD * gate_p * sigma_phys
    dL_dd_phys = dD * gate_d * f_d

    ybar_b = (2.0 * r_psi * inv_n)[:, None]
    gbar = np.ascontiguousarray(
        np.stack([dL_dsigma * c_sigma, -dL_dfd * c_fd], axis=1)[:, None, :])
    _, _, dWb, dbb, xb_bar = backend.grad_vjp(
        model.energy_params.weights, model.energy_params.biases,
        model.energy_spec.act_id, model.energy_spec.head_ids,
        Xb, _ENERGY_DIRS, ybar_b, gbar)

    if model.plastic:
        p_bar = 2.0 * r_p * inv_n + dL_dp_phys * norm.span("eps_p") + xb_bar[:, _SLOT_EPS_P_NEXT]
    else:
        p_bar = np.zeros(n)  # the pinned zero output carries no gradient
    d_bar = 2.0 * r_d * inv_n + dL_dd_phys * norm.span("d") + xb_bar[:, _SLOT_D_NEXT]
    ybar_a = np.ascontiguousarray(np.stack([p_bar, d_bar], axis=1))
    _, dWa, dba, _ = backend.vjp(model.state_params.weights, model.state_params.biases,
                                 model.state_spec.act_id, model.state_spec.head_ids, Xa, ybar_a)

    grads = (MlpParams(list(dWa), list(dba)).to_vector(),
             MlpParams(list(dWb), list(dbb)).to_vector())
    return outputs, terms, grads


def energy_forward(model: EnergyModel, batch: dict) -> dict:
    """Predicted n+1 quantities in physical units, plus the damage force f_d."""
    outputs, _, _ = _energy_core(model, batch, with_grad=False, with_targets=False)
    return outputs


def dissipation_update(D_d_prev, D_p_prev, outputs: dict, eps_p_n, d_n) -> dict:
    """Advance both dissipation ledgers from model outputs.

    Raw accumulators keep whatever the recursion produced; only the total
    that faces the loss (and reporting) is clamped nonnegative.
    """
    D_p = np.asarray(D_p_prev) + outputs["sigma_next"] * (outputs["eps_p_next"] - np.asarray(eps_p_n))
    D_d = np.asarray(D_d_prev) + outputs["f_d"] * (outputs["d_next"] - np.asarray(d_n))
    return {"D_p": D_p, "D_d": D_d, "D": _relu(D_p) + _relu(D_d)}


def energy_loss(model: EnergyModel, batch: dict):
    """Total loss and the five unit-weight terms (normalized units)."""
    _, terms, _ = _energy_core(model, batch, with_grad=False, with_targets=True)
    return sum(terms.values()), terms


def energy_loss_and_grad(model: EnergyModel, batch: dict):
    """Returns (total, terms, grad_state_vec, grad_energy_vec); exact gradients."""
    _, terms, grads = _energy_core(model, batch, with_grad=True, with_targets=True)
    for name, value in terms.items():
        if not np.isfinite(value):
            raise GradientError(f"non-finite loss term {name!r}")
    ga, gb = grads
    if not (np.all(np.isfinite(ga)) and np.all(np.isfinite(gb))):
        raise GradientError("non-finite parameter gradient in the composite loss")
    return sum(terms.values()), terms, ga, gb


def _spec_params_doc(spec: MlpSpec, params: MlpParams) -> dict:
    return {"spec": spec.to_dict(), "params": params.to_jsonable()}


def checkpoint_doc(model, extra: dict | None = None) -> dict:
    doc = {"checkpoint_schema": CHECKPOINT_SCHEMA, "norm": model.norm.to_dict()}
    if isinstance(model, NaiveStressModel):
        doc["kind"] = "naive"
        doc["net"] = _spec_params_doc(model.spec, model.params)
    elif isinstance(model, EnergyModel):
        doc["kind"] = "energy"
        doc["plastic"] = model.plastic
        doc["state_net"] = _spec_params_doc(model.state_spec, model.state_params)
        doc["energy_net"] = _spec_params_doc(model.energy_spec, model.energy_params)
    else:
        raise TypeError(f"cannot checkpoint {type(model)!r}")
    doc.update(extra or {})
    return doc


def save_checkpoint(path: str | Path, model, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(checkpoint_doc(model, extra), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(path: str | Path):
    """Returns (model, doc); parameter floats round-trip exactly through JSON."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("checkpoint_schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {doc.get('checkpoint_schema')!r}")
    norm = NormScales.from_dict(doc["norm"])
    if doc["kind"] == "naive":
        model = NaiveStressModel(
            spec=MlpSpec.from_dict(doc["net"]["spec"]),
            params=MlpParams.from_jsonable(doc["net"]["params"]),
            norm=norm,
        )
    elif doc["kind"] == "energy":
        model = EnergyModel(
            state_spec=MlpSpec.from_dict(doc["state_net"]["spec"]),
            state_params=MlpParams.from_jsonable(doc["state_net"]["params"]),
            energy_spec=MlpSpec.from_dict(doc["energy_net"]["spec"]),
            energy_params=MlpParams.from_jsonable(doc["energy_net"]["params"]),
            norm=norm,
            plastic=bool(doc["plastic"]),
        )
    else:
        raise ValueError(f"unknown checkpoint kind {doc['kind']!r}")
    return model, doc
