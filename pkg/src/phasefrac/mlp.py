"""Small fully-connected networks with exact input and parameter gradients.

Everything here is a thin, validated layer over the kernel backend: specs
and parameter containers, Glorot initialization, forward evaluation, exact
input-gradients, and flat-vector views used by the optimizer.  Losses that
mix network outputs with input-derivative terms are assembled in
:mod:`phasefrac.models` on top of ``backend.vjp`` / ``backend.grad_vjp``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend

_ACT_IDS = {"relu": backend.ACT_RELU, "softplus": backend.ACT_SOFTPLUS}
_HEAD_IDS = {"identity": backend.HEAD_IDENTITY, "relu_d": backend.HEAD_RELU_D}


class GradientError(RuntimeError):
    """Raised when a gradient evaluation produces non-finite values."""


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description: layer sizes, hidden activation, output heads.

    ``layer_sizes`` runs input -> hidden... -> output; at least one hidden
    layer is required.  ``output_heads`` names one transform per output
    neuron: ``identity`` or ``relu_d`` (clamped to [0, 1]).
    """

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "softplus"
    output_heads: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.hidden_activation not in _ACT_IDS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        heads = tuple(self.output_heads) or ("identity",) * sizes[-1]
        object.__setattr__(self, "output_heads", heads)
        if len(heads) != sizes[-1]:
            raise ValueError("need one output head per output neuron")
        if any(h not in _HEAD_IDS for h in heads):
            raise ValueError(f"unknown output head in {heads}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def act_id(self) -> int:
        return _ACT_IDS[self.hidden_activation]

    @property
    def head_ids(self) -> np.ndarray:
        return np.array([_HEAD_IDS[h] for h in self.output_heads], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_heads": list(self.output_heads),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            layer_sizes=tuple(d["layer_sizes"]),
            hidden_activation=d["hidden_activation"],
            output_heads=tuple(d["output_heads"]),
        )


@dataclass
class MlpParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_values(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def to_vector(self) -> np.ndarray:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    def from_vector(self, vec: np.ndarray) -> "MlpParams":
        """Rebuild params with this object's shapes from a flat vector."""
        ws, bs = [], []
        i = 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[i : i + w.size].reshape(w.shape).copy())
            i += w.size
            bs.append(vec[i : i + b.size].copy())
            i += b.size
        if i != vec.size:
            raise ValueError(f"flat vector has {vec.size} values, expected {i}")
        return MlpParams(ws, bs)

    def to_jsonable(self) -> list:
        return [[w.tolist(), b.tolist()] for w, b in zip(self.weights, self.biases)]

    @classmethod
    def from_jsonable(cls, layers: list) -> "MlpParams":
        ws = [np.asarray(w, dtype=np.float64) for w, _ in layers]
        bs = [np.asarray(b, dtype=np.float64) for _, b in layers]
        return cls(ws, bs)


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    params = MlpParams()
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.biases.append(np.zeros(fan_out))
    return params


def _check_params(spec: MlpSpec, params: MlpParams) -> None:
    if len(params.weights) != len(spec.layer_sizes) - 1:
        raise ValueError("parameter layer count does not match spec")
    for l, (fan_in, fan_out) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        if params.weights[l].shape != (fan_in, fan_out) or params.biases[l].shape != (fan_out,):
            raise ValueError(f"layer {l} shapes do not match spec {spec.layer_sizes}")
    for arr in (*params.weights, *params.biases):
        if not np.all(np.isfinite(arr)):
            raise ValueError("parameters contain non-finite values")


def _as_batch(spec: MlpSpec, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.n_inputs:
        raise ValueError(f"input shape {x.shape} does not match {spec.n_inputs} features")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return np.ascontiguousarray(x), single


def forward(spec: MlpSpec, params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; accepts a feature vector or an (n, n_in) batch."""
    _check_params(spec, params)
    xb, single = _as_batch(spec, x)
    y = backend.forward(params.weights, params.biases, spec.act_id, spec.head_ids, xb)
    return y[0] if single else y


def input_gradient(
    spec: MlpSpec, params: MlpParams, x: np.ndarray, output_index: int
) -> np.ndarray:
    """Exact Jacobian row d y[output_index] / d x (chain rule, no FD).

    At the relu_d kinks the one-sided convention is 0 at pre-activation <= 0,
    1 strictly inside (0, 1), 0 at >= 1.
    """
    _check_params(spec, params)
    if not 0 <= output_index < spec.n_outputs:
        raise ValueError(f"output_index {output_index} out of range")
    xb, single = _as_batch(spec, x)
    dirs = np.arange(spec.n_inputs, dtype=np.int64)
    _, g = backend.forward_grad(
        params.weights, params.biases, spec.act_id, spec.head_ids, xb, dirs
    )
    row = g[:, output_index, :]
    return row[0] if single else row
