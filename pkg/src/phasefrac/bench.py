"""Backend micro-benchmark: compiled core against the NumPy reference.

Times the four kernels at the shapes training actually uses (the two
production nets, minibatch and full-batch sizes) plus one composite
loss+gradient evaluation on the active backend.
"""

from __future__ import annotations

import time

import numpy as np

from . import backend, mlp, models
from .backend import reference
from .mlp import MlpSpec

KERNELS = ("forward", "vjp", "forward_grad", "grad_vjp")


def _time_call(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _kernel_args(kernel: str, spec: MlpSpec, params, X, rng):
    base = (params.weights, params.biases, spec.act_id, spec.head_ids, X)
    n, n_out = X.shape[0], spec.n_outputs
    dirs = np.array([0, spec.n_inputs - 2], dtype=np.int64)
    if kernel == "forward":
        return base
    if kernel == "vjp":
        return (*base, rng.normal(size=(n, n_out)))
    if kernel == "forward_grad":
        return (*base, dirs)
    return (*base, dirs, rng.normal(size=(n, n_out)), rng.normal(size=(n, n_out, 2)))


def run_bench(batch_sizes=(64, 2048), repeats: int = 30) -> list[str]:
    rng = np.random.default_rng(0)
    impls = [("python", reference)]
    if backend.compiled_available():
        from .backend import _fastcore

        impls.append(("compiled", _fastcore))

    nets = {
        "state-net 6-16-8-2": MlpSpec((6, 16, 8, 2), output_heads=("identity", "relu_d")),
        "energy-net 8-16-8-1": MlpSpec((8, 16, 8, 1)),
    }
    lines = [f"active backend: {backend.backend_name()}"]
    for net_name, spec in nets.items():
        params = mlp.init_params(spec, 1)
        for n in batch_sizes:
            X = rng.uniform(-1.0, 1.0, size=(n, spec.n_inputs))
            for kernel in KERNELS:
                times = {}
                for impl_name, impl in impls:
                    args = _kernel_args(kernel, spec, params, X, np.random.default_rng(2))
                    _time_call(getattr(impl, kernel), args, 3)  # warmup
                    times[impl_name] = _time_call(getattr(impl, kernel), args, repeats)
                entry = f"{net_name:>20s}  n={n:<5d} {kernel:<13s}"
                entry += "  ".join(f"{k}={v * 1e6:9.1f} us" for k, v in times.items())
                if len(times) == 2:
                    entry += f"  speedup x{times['python'] / times['compiled']:.1f}"
                lines.append(entry)

    # one composite loss+gradient on the active backend, production shapes
    from .gradcheck import _synth_batch, _unit_norm

    model = models.make_energy_model(_unit_norm(), seed=0, plastic=True)
    for n in batch_sizes:
        batch = _synth_batch(np.random.default_rng(3), n)
        fn = lambda: models.energy_loss_and_grad(model, batch)  # noqa: E731
        fn()
        best = float("inf")
        for _ in range(max(3, repeats // 3)):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        lines.append(
            f"composite loss+grad ({backend.backend_name()}) n={n:<5d} {best * 1e6:9.1f} us"
        )
    return lines
