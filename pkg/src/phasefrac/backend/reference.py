"""NumPy reference implementation of the network kernels.

Conventions shared with the compiled core:

* weights ``W[l]`` have shape ``(fan_in, fan_out)``, biases ``(fan_out,)``;
* ``X`` is a batch ``(n, n_in)`` of float64;
* hidden layers share one activation (relu or softplus), the output layer is
  linear with a per-output head transform (identity or the [0, 1]-clamped
  relu_d);
* ``dirs`` selects input coordinates whose directional derivatives are
  propagated as forward tangents alongside the values.

``grad_vjp`` is the core of derivative-supervised training: it backpropagates
a cotangent of both the outputs and the input-gradients, which requires the
activation's second derivative along the tangent stream.  All kernels are
deterministic elementwise recursions; results are reproducible bit-for-bit
for identical inputs within one backend.
"""

from __future__ import annotations

import numpy as np

ACT_RELU = 0
ACT_SOFTPLUS = 1
HEAD_IDENTITY = 0
HEAD_RELU_D = 1


def _softplus(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _act(a: np.ndarray, act: int) -> np.ndarray:
    if act == ACT_SOFTPLUS:
        return _softplus(a)
    return np.maximum(a, 0.0)


def _act_prime(a: np.ndarray, act: int) -> np.ndarray:
    if act == ACT_SOFTPLUS:
        return _sigmoid(a)
    return (a > 0.0).astype(np.float64)


def _act_second(a: np.ndarray, act: int) -> np.ndarray:
    if act == ACT_SOFTPLUS:
        s = _sigmoid(a)
        return s * (1.0 - s)
    return np.zeros_like(a)


def _head_value(a: np.ndarray, heads: np.ndarray) -> np.ndarray:
    y = a.copy()
    for j, head in enumerate(heads):
        if head == HEAD_RELU_D:
            y[:, j] = np.clip(a[:, j], 0.0, 1.0)
    return y


def _head_prime(a: np.ndarray, heads: np.ndarray) -> np.ndarray:
    # relu_d one-sided convention at the kinks: 0 at a <= 0, 1 inside, 0 at a >= 1
    g = np.ones_like(a)
    for j, head in enumerate(heads):
        if head == HEAD_RELU_D:
            g[:, j] = ((a[:, j] > 0.0) & (a[:, j] < 1.0)).astype(np.float64)
    return g


def forward(Ws, bs, act, heads, X):
    """Batch forward pass; returns Y of shape (n, n_out)."""
    z = X
    for l in range(len(Ws) - 1):
        z = _act(z @ Ws[l] + bs[l], act)
    a_out = z @ Ws[-1] + bs[-1]
    return _head_value(a_out, heads)


def vjp(Ws, bs, act, heads, X, ybar):
    """Fused forward + reverse for first-order losses.

    Returns ``(Y, dWs, dbs, Xbar)`` where the gradients contract the output
    cotangent ``ybar`` (n, n_out) against the network Jacobians.
    """
    L = len(Ws)
    zs = [X]
    pres = []
    z = X
    for l in range(L - 1):
        a = z @ Ws[l] + bs[l]
        pres.append(a)
        z = _act(a, act)
        zs.append(z)
    a_out = z @ Ws[-1] + bs[-1]
    pres.append(a_out)
    y = _head_value(a_out, heads)

    abar = ybar * _head_prime(a_out, heads)
    dWs = [None] * L
    dbs = [None] * L
    for l in range(L - 1, -1, -1):
        dWs[l] = zs[l].T @ abar
        dbs[l] = abar.sum(axis=0)
        zbar = abar @ Ws[l].T
        if l > 0:
            abar = zbar * _act_prime(pres[l - 1], act)
    return y, dWs, dbs, zbar


def forward_grad(Ws, bs, act, heads, X, dirs):
    """Forward pass with input-directional tangents.

    Returns ``(Y, G)`` with ``G[i, o, j] = dY[i, o] / dX[i, dirs[j]]``.
    """
    n, n_in = X.shape
    k = len(dirs)
    t = np.zeros((n, n_in, k))
    t[:, dirs, np.arange(k)] = 1.0
    z = X
    for l in range(len(Ws) - 1):
        a = z @ Ws[l] + bs[l]
        v = np.einsum("nik,io->nok", t, Ws[l])
        sp = _act_prime(a, act)
        z = _act(a, act)
        t = sp[:, :, None] * v
    a_out = z @ Ws[-1] + bs[-1]
    v_out = np.einsum("nik,io->nok", t, Ws[-1])
    y = _head_value(a_out, heads)
    g = _head_prime(a_out, heads)[:, :, None] * v_out
    return y, g


def grad_vjp(Ws, bs, act, heads, X, dirs, ybar, gbar):
    """Extended forward (values + tangents) followed by its exact reverse.

    ``ybar`` (n, n_out) and ``gbar`` (n, n_out, k) are the cotangents of the
    outputs and of the input-gradients ``G``.  Returns
    ``(Y, G, dWs, dbs, Xbar)``.  The reverse pass through the tangent
    recursion ``t_l = act'(a_l) * (W_l^T t_{l-1})`` contributes the
    second-derivative term ``act''(a_l) * v_l * ubar_l`` to the adjoint of
    ``a_l``; head transforms are piecewise linear so they add no curvature.
    """
    n, n_in = X.shape
    k = len(dirs)
    L = len(Ws)

    zs = [X]
    pres = []
    vs = []  # pre-activation tangents per layer
    ts = []  # post-activation tangents per layer (ts[0] = seed)
    t = np.zeros((n, n_in, k))
    t[:, dirs, np.arange(k)] = 1.0
    ts.append(t)
    z = X
    for l in range(L - 1):
        a = z @ Ws[l] + bs[l]
        v = np.einsum("nik,io->nok", ts[l], Ws[l])
        pres.append(a)
        vs.append(v)
        z = _act(a, act)
        zs.append(z)
        ts.append(_act_prime(a, act)[:, :, None] * v)
    a_out = z @ Ws[-1] + bs[-1]
    v_out = np.einsum("nik,io->nok", ts[-1], Ws[-1])
    pres.append(a_out)
    vs.append(v_out)
    y = _head_value(a_out, heads)
    hp = _head_prime(a_out, heads)
    g = hp[:, :, None] * v_out

    abar = ybar * hp
    vbar = gbar * hp[:, :, None]
    dWs = [None] * L
    dbs = [None] * L
    for l in range(L - 1, -1, -1):
        dWs[l] = zs[l].T @ abar + np.einsum("nik,nok->io", ts[l], vbar)
        dbs[l] = abar.sum(axis=0)
        zbar = abar @ Ws[l].T
        ubar = np.einsum("nok,io->nik", vbar, Ws[l])
        if l > 0:
            a = pres[l - 1]
            sp = _act_prime(a, act)
            ss = _act_second(a, act)
            abar = sp * zbar + ss * np.einsum("nik,nik->ni", vs[l - 1], ubar)
            vbar = sp[:, :, None] * ubar
    return y, g, dWs, dbs, zbar
