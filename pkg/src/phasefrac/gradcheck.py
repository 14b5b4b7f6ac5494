"""Finite-difference certification of every analytic gradient path.

Run from the CLI (``phasefrac gradcheck``) or tests.  Each check compares an
analytic gradient against central finite differences computed through the
plain forward evaluators only, and one deliberately corrupted gradient must
be rejected (negative control), proving the comparison has teeth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend, mlp, models
from .mlp import MlpSpec

INPUT_GRAD_TOL = 1e-6
PARAM_GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float
    expect_fail: bool = False

    @property
    def passed(self) -> bool:
        if self.expect_fail:
            return self.max_rel_err > self.tol
        return self.max_rel_err <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        kind = "must exceed" if self.expect_fail else "tol"
        return f"[{status}] {self.name}: max rel err {self.max_rel_err:.3e} ({kind} {self.tol:.0e})"


def _fd_gradient(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def _rel_err(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


def check_input_gradient(seed: int) -> CheckResult:
    spec = MlpSpec((4, 16, 8, 2), output_heads=("identity", "relu_d"))
    params = mlp.init_params(spec, seed)
    rng = np.random.default_rng(seed + 1)
    for b in params.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    worst = 0.0
    for _ in range(4):
        x = rng.uniform(-1.0, 1.0, size=4)
        for out in range(2):
            got = mlp.input_gradient(spec, params, x, out)
            want = _fd_gradient(lambda v: mlp.forward(spec, params, v)[out], x, 1e-6)
            worst = max(worst, _rel_err(got, want))
    return CheckResult("input gradient vs FD", worst, INPUT_GRAD_TOL)


def _synth_batch(rng, n):
    return {
        "eps_next": rng.uniform(0.0, 0.3, n),
        "eps_n": rng.uniform(0.0, 0.3, n),
        "eps_p_n": rng.uniform(0.0, 0.05, n),
        "eps_p_next": rng.uniform(0.0, 0.05, n),
        "sigma_n": rng.uniform(0.0, 1.5, n),
        "sigma_next": rng.uniform(0.0, 1.5, n),
        "d_n": rng.uniform(0.0, 0.8, n),
        "d_next": rng.uniform(0.0, 0.9, n),
        "psi_next": rng.uniform(0.0, 0.2, n),
        "D_p_n": rng.uniform(0.0, 0.1, n),
        "D_p_next": rng.uniform(0.0, 0.12, n),
        "D_d_n": rng.uniform(0.0, 0.1, n),
        "D_d_next": rng.uniform(0.0, 0.12, n),
        "E": rng.uniform(20.0, 50.0, n),
    }


def _unit_norm():
    from .datagen import QUANTITIES, NormScales

    return NormScales(scales={q: (0.0, 1.0) for q in QUANTITIES})


def check_naive_loss_gradient(seed: int) -> CheckResult:
    model = models.make_naive_model(_unit_norm(), seed)
    batch = _synth_batch(np.random.default_rng(seed + 2), 6)
    _, got = models.naive_loss_and_grad(model, batch)

    def loss(vec):
        probe = models.NaiveStressModel(model.spec, model.params.from_vector(vec), model.norm)
        return models.naive_loss(probe, batch)

    want = _fd_gradient(loss, model.params.to_vector(), 1e-6)
    return CheckResult("stress-MSE parameter gradient vs FD", _rel_err(got, want), PARAM_GRAD_TOL)


def _energy_fd(model, batch, which: str):
    import dataclasses

    def loss(vec):
        if which == "state":
            probe = dataclasses.replace(model, state_params=model.state_params.from_vector(vec))
        else:
            probe = dataclasses.replace(model, energy_params=model.energy_params.from_vector(vec))
        return models.energy_loss(probe, batch)[0]

    params = model.state_params if which == "state" else model.energy_params
    return _fd_gradient(loss, params.to_vector(), 1e-6)


def check_energy_loss_gradient(seed: int) -> list[CheckResult]:
    model = models.make_energy_model(_unit_norm(), seed, plastic=True)
    batch = _synth_batch(np.random.default_rng(seed + 3), 5)
    _, _, ga, gb = models.energy_loss_and_grad(model, batch)
    res = [
        CheckResult("composite loss, state-net gradient vs FD",
                    _rel_err(ga, _energy_fd(model, batch, "state")), PARAM_GRAD_TOL),
        CheckResult("composite loss, energy-net gradient vs FD",
                    _rel_err(gb, _energy_fd(model, batch, "energy")), PARAM_GRAD_TOL),
    ]
    # negative control: a corrupted gradient must NOT pass the same gate
    # (0.1% multiplicative bias, i.e. a subtle systematic implementation error)
    mutant = 1.001 * ga
    res.append(
        CheckResult("corrupted gradient rejected (negative control)",
                    _rel_err(mutant, _energy_fd(model, batch, "state")), PARAM_GRAD_TOL,
                    expect_fail=True)
    )
    return res


def check_backend_parity(seed: int) -> CheckResult | None:
    """Compiled core against the NumPy reference, when both are present."""
    if not backend.compiled_available():
        return None
    from .backend import _fastcore, reference

    rng = np.random.default_rng(seed)
    spec = MlpSpec((6, 16, 8, 2), output_heads=("identity", "relu_d"))
    params = mlp.init_params(spec, seed)
    X = rng.uniform(-1.0, 1.0, size=(16, 6))
    dirs = np.array([0, 4], dtype=np.int64)
    ybar = rng.normal(size=(16, 2))
    gbar = rng.normal(size=(16, 2, 2))
    a = _fastcore.grad_vjp(params.weights, params.biases, spec.act_id, spec.head_ids,
                           X, dirs, ybar, gbar)
    b = reference.grad_vjp(params.weights, params.biases, spec.act_id, spec.head_ids,
                           X, dirs, ybar, gbar)
    worst = 0.0
    flat = lambda r: np.concatenate([r[0].ravel(), r[1].ravel(), r[4].ravel(),  # noqa: E731
                                     *[w.ravel() for w in r[2]], *[x.ravel() for x in r[3]]])
    worst = _rel_err(flat(a), flat(b))
    return CheckResult("compiled core vs NumPy reference", worst, 1e-11)


def run_all(seed: int = 0) -> tuple[bool, list[str]]:
    results = [check_input_gradient(seed), check_naive_loss_gradient(seed)]
    results.extend(check_energy_loss_gradient(seed))
    parity = check_backend_parity(seed)
    lines = [r.line() for r in results]
    if parity is not None:
        lines.append(parity.line())
        results.append(parity)
    else:
        lines.append("[SKIP] compiled core vs NumPy reference: extension not built")
    return all(r.passed for r in results), lines
