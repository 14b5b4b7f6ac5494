# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the NumPy reference kernels.

Same contracts as :mod:`phasefrac.backend.reference`; plain serial loops,
which beat the vectorized reference at the small batch/layer sizes training
uses because the per-call dispatch overhead disappears.  Results are
deterministic; agreement with the reference is certified by the parity
tests and the gradcheck command.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p

cnp.import_array()

ACT_RELU = 0
ACT_SOFTPLUS = 1
HEAD_IDENTITY = 0
HEAD_RELU_D = 1

ctypedef cnp.float64_t f64


cdef inline double _softplus(double a) noexcept nogil:
    cdef double m = a if a > 0.0 else 0.0
    return m + log1p(exp(-fabs(a)))


cdef inline double _sigmoid(double a) noexcept nogil:
    cdef double e
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    e = exp(a)
    return e / (1.0 + e)


cdef void _dense(double[:, ::1] z, double[:, ::1] W, double[::1] b,
                 double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], m = W.shape[1]
    cdef Py_ssize_t i, j, o
    cdef double acc
    for i in range(n):
        for o in range(m):
            acc = b[o]
            for j in range(k):
                acc += z[i, j] * W[j, o]
            out[i, o] = acc


cdef void _dense_tangent(double[:, :, ::1] t, double[:, ::1] W,
                         double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = t.shape[0], k = t.shape[1], nd = t.shape[2], m = W.shape[1]
    cdef Py_ssize_t i, j, o, d
    cdef double acc
    for i in range(n):
        for o in range(m):
            for d in range(nd):
                acc = 0.0
                for j in range(k):
                    acc += t[i, j, d] * W[j, o]
                out[i, o, d] = acc


cdef void _activate(double[:, ::1] a, int act, double[:, ::1] z,
                    double[:, ::1] sp) noexcept nogil:
    """z = act(a), sp = act'(a)."""
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t i, o
    cdef double v
    for i in range(n):
        for o in range(m):
            v = a[i, o]
            if act == 1:
                z[i, o] = _softplus(v)
                sp[i, o] = _sigmoid(v)
            else:
                z[i, o] = v if v > 0.0 else 0.0
                sp[i, o] = 1.0 if v > 0.0 else 0.0


cdef void _head(double[:, ::1] a, long[::1] heads, double[:, ::1] y,
                double[:, ::1] hp) noexcept nogil:
    """y = head(a), hp = head'(a); relu_d kinks use the one-sided convention."""
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t i, o
    cdef double v
    for i in range(n):
        for o in range(m):
            v = a[i, o]
            if heads[o] == 1:
                y[i, o] = 0.0 if v <= 0.0 else (1.0 if v >= 1.0 else v)
                hp[i, o] = 1.0 if (0.0 < v < 1.0) else 0.0
            else:
                y[i, o] = v
                hp[i, o] = 1.0


cdef list _as_contig(list arrs):
    return [np.ascontiguousarray(a, dtype=np.float64) for a in arrs]


def forward(Ws, bs, int act, heads, X):
    cdef list Wl = _as_contig(list(Ws))
    cdef list bl = _as_contig(list(bs))
    cdef cnp.ndarray[f64, ndim=2] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef long[::1] hd = np.ascontiguousarray(heads, dtype=np.int64)
    cdef Py_ssize_t L = len(Wl), n = Xc.shape[0]
    cdef Py_ssize_t l
    z = Xc
    cdef cnp.ndarray[f64, ndim=2] a, zn, sp
    for l in range(L - 1):
        a = np.empty((n, (<object>Wl[l]).shape[1]))
        _dense(z, Wl[l], bl[l], a)
        zn = np.empty_like(a)
        sp = np.empty_like(a)
        _activate(a, act, zn, sp)
        z = zn
    a = np.empty((n, (<object>Wl[L - 1]).shape[1]))
    _dense(z, Wl[L - 1], bl[L - 1], a)
    y = np.empty_like(a)
    hp = np.empty_like(a)
    _head(a, hd, y, hp)
    return y


def vjp(Ws, bs, int act, heads, X, ybar):
    cdef list Wl = _as_contig(list(Ws))
    cdef list bl = _as_contig(list(bs))
    cdef cnp.ndarray[f64, ndim=2] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=2] yb = np.ascontiguousarray(ybar, dtype=np.float64)
    cdef long[::1] hd = np.ascontiguousarray(heads, dtype=np.int64)
    cdef Py_ssize_t L = len(Wl), n = Xc.shape[0]
    cdef Py_ssize_t l, i, o, k
    cdef list zs = [Xc], sps = []
    cdef cnp.ndarray[f64, ndim=2] a, zn, sp, y, hp

    z = Xc
    for l in range(L - 1):
        a = np.empty((n, (<object>Wl[l]).shape[1]))
        _dense(z, Wl[l], bl[l], a)
        zn = np.empty_like(a)
        sp = np.empty_like(a)
        _activate(a, act, zn, sp)
        zs.append(zn)
        sps.append(sp)
        z = zn
    a = np.empty((n, (<object>Wl[L - 1]).shape[1]))
    _dense(z, Wl[L - 1], bl[L - 1], a)
    y = np.empty_like(a)
    hp = np.empty_like(a)
    _head(a, hd, y, hp)

    cdef list dWs = [None] * L, dbs = [None] * L
    cdef cnp.ndarray[f64, ndim=2] abar = np.empty_like(y)
    cdef double[:, ::1] abar_v = abar, hp_v = hp, yb_v = yb
    for i in range(n):
        for o in range(abar.shape[1]):
            abar_v[i, o] = yb_v[i, o] * hp_v[i, o]

    cdef cnp.ndarray[f64, ndim=2] dW, zbar, zprev, spv, W
    cdef cnp.ndarray[f64, ndim=1] db
    cdef double acc
    for l in range(L - 1, -1, -1):
        W = Wl[l]
        zprev = zs[l]
        dW = np.empty_like(W)
        db = np.empty(W.shape[1])
        _accumulate_first_order(zprev, abar, dW, db)
        dWs[l] = dW
        dbs[l] = db
        zbar = np.empty((n, W.shape[0]))
        _backprop_z(abar, W, zbar)
        if l > 0:
            spv = sps[l - 1]
            abar = np.empty_like(zbar)
            _mul_into(spv, zbar, abar)
        else:
            return y, dWs, dbs, zbar


cdef void _accumulate_first_order(double[:, ::1] zprev, double[:, ::1] abar,
                                  double[:, ::1] dW, double[::1] db) noexcept nogil:
    cdef Py_ssize_t n = zprev.shape[0], k = zprev.shape[1], m = abar.shape[1]
    cdef Py_ssize_t i, j, o
    cdef double acc
    for j in range(k):
        for o in range(m):
            acc = 0.0
            for i in range(n):
                acc += zprev[i, j] * abar[i, o]
            dW[j, o] = acc
    for o in range(m):
        acc = 0.0
        for i in range(n):
            acc += abar[i, o]
        db[o] = acc


cdef void _backprop_z(double[:, ::1] abar, double[:, ::1] W,
                      double[:, ::1] zbar) noexcept nogil:
    cdef Py_ssize_t n = abar.shape[0], m = abar.shape[1], k = W.shape[0]
    cdef Py_ssize_t i, j, o
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for o in range(m):
                acc += abar[i, o] * W[j, o]
            zbar[i, j] = acc


cdef void _mul_into(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t i, o
    for i in range(n):
        for o in range(m):
            out[i, o] = a[i, o] * b[i, o]


cdef cnp.ndarray _seed_tangent(Py_ssize_t n, Py_ssize_t n_in, long[::1] dirs):
    cdef cnp.ndarray[f64, ndim=3] t = np.zeros((n, n_in, dirs.shape[0]))
    cdef double[:, :, ::1] tv = t
    cdef Py_ssize_t i, d
    for i in range(n):
        for d in range(dirs.shape[0]):
            tv[i, dirs[d], d] = 1.0
    return t


def forward_grad(Ws, bs, int act, heads, X, dirs):
    cdef list Wl = _as_contig(list(Ws))
    cdef list bl = _as_contig(list(bs))
    cdef cnp.ndarray[f64, ndim=2] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef long[::1] hd = np.ascontiguousarray(heads, dtype=np.int64)
    cdef long[::1] dr = np.ascontiguousarray(dirs, dtype=np.int64)
    cdef Py_ssize_t L = len(Wl), n = Xc.shape[0], nd = dr.shape[0]
    cdef Py_ssize_t l, i, o, d

    cdef cnp.ndarray[f64, ndim=3] t = _seed_tangent(n, Xc.shape[1], dr)
    cdef cnp.ndarray[f64, ndim=2] a, zn, sp, y, hp
    cdef cnp.ndarray[f64, ndim=3] v, tn
    z = Xc
    for l in range(L - 1):
        m = (<object>Wl[l]).shape[1]
        a = np.empty((n, m))
        _dense(z, Wl[l], bl[l], a)
        v = np.empty((n, m, nd))
        _dense_tangent(t, Wl[l], v)
        zn = np.empty_like(a)
        sp = np.empty_like(a)
        _activate(a, act, zn, sp)
        tn = np.empty_like(v)
        _scale_tangent(sp, v, tn)
        z = zn
        t = tn
    m = (<object>Wl[L - 1]).shape[1]
    a = np.empty((n, m))
    _dense(z, Wl[L - 1], bl[L - 1], a)
    v = np.empty((n, m, nd))
    _dense_tangent(t, Wl[L - 1], v)
    y = np.empty_like(a)
    hp = np.empty_like(a)
    _head(a, hd, y, hp)
    cdef cnp.ndarray[f64, ndim=3] g = np.empty_like(v)
    _scale_tangent(hp, v, g)
    return y, g


cdef void _scale_tangent(double[:, ::1] s, double[:, :, ::1] v,
                         double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0], m = v.shape[1], nd = v.shape[2]
    cdef Py_ssize_t i, o, d
    for i in range(n):
        for o in range(m):
            for d in range(nd):
                out[i, o, d] = s[i, o] * v[i, o, d]


def grad_vjp(Ws, bs, int act, heads, X, dirs, ybar, gbar):
    cdef list Wl = _as_contig(list(Ws))
    cdef list bl = _as_contig(list(bs))
    cdef cnp.ndarray[f64, ndim=2] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=2] yb = np.ascontiguousarray(ybar, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=3] gb = np.ascontiguousarray(gbar, dtype=np.float64)
    cdef long[::1] hd = np.ascontiguousarray(heads, dtype=np.int64)
    cdef long[::1] dr = np.ascontiguousarray(dirs, dtype=np.int64)
    cdef Py_ssize_t L = len(Wl), n = Xc.shape[0], nd = dr.shape[0]
    cdef Py_ssize_t l, i, o, j, d, m

    # extended forward, stashing values, derivative factors and tangents
    cdef list zs = [Xc], sps = [], sss = [], vs = [], ts = []
    cdef cnp.ndarray[f64, ndim=3] t = _seed_tangent(n, Xc.shape[1], dr)
    ts.append(t)
    cdef cnp.ndarray[f64, ndim=2] a, zn, sp, ss, y, hp
    cdef cnp.ndarray[f64, ndim=3] v, tn
    z = Xc
    for l in range(L - 1):
        m = (<object>Wl[l]).shape[1]
        a = np.empty((n, m))
        _dense(z, Wl[l], bl[l], a)
        v = np.empty((n, m, nd))
        _dense_tangent(ts[l], Wl[l], v)
        zn = np.empty_like(a)
        sp = np.empty_like(a)
        _activate(a, act, zn, sp)
        ss = np.empty_like(a)
        _act_second(a, act, ss)
        tn = np.empty_like(v)
        _scale_tangent(sp, v, tn)
        zs.append(zn)
        sps.append(sp)
        sss.append(ss)
        vs.append(v)
        ts.append(tn)
        z = zn
    m = (<object>Wl[L - 1]).shape[1]
    a = np.empty((n, m))
    _dense(z, Wl[L - 1], bl[L - 1], a)
    v = np.empty((n, m, nd))
    _dense_tangent(ts[L - 1], Wl[L - 1], v)
    vs.append(v)
    y = np.empty_like(a)
    hp = np.empty_like(a)
    _head(a, hd, y, hp)
    cdef cnp.ndarray[f64, ndim=3] g = np.empty_like(v)
    _scale_tangent(hp, v, g)

    # reverse pass with value and tangent cotangents
    cdef cnp.ndarray[f64, ndim=2] abar = np.empty_like(y)
    _mul_into(hp, yb, abar)
    cdef cnp.ndarray[f64, ndim=3] vbar = np.empty_like(g)
    _scale_tangent(hp, gb, vbar)

    cdef list dWs = [None] * L, dbs = [None] * L
    cdef cnp.ndarray[f64, ndim=2] dW, zbar, W
    cdef cnp.ndarray[f64, ndim=1] db
    cdef cnp.ndarray[f64, ndim=3] ubar
    for l in range(L - 1, -1, -1):
        W = Wl[l]
        dW = np.empty_like(W)
        db = np.empty(W.shape[1])
        _accumulate_first_order(zs[l], abar, dW, db)
        _accumulate_tangent(ts[l], vbar, dW)
        dWs[l] = dW
        dbs[l] = db
        zbar = np.empty((n, W.shape[0]))
        _backprop_z(abar, W, zbar)
        ubar = np.empty((n, W.shape[0], nd))
        _backprop_tangent(vbar, W, ubar)
        if l > 0:
            abar = np.empty_like(zbar)
            _combine_abar(sps[l - 1], sss[l - 1], zbar, vs[l - 1], ubar, abar)
            vbar = np.empty_like(ubar)
            _scale_tangent(sps[l - 1], ubar, vbar)
        else:
            return y, g, dWs, dbs, zbar


cdef void _act_second(double[:, ::1] a, int act, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t i, o
    cdef double s
    for i in range(n):
        for o in range(m):
            if act == 1:
                s = _sigmoid(a[i, o])
                out[i, o] = s * (1.0 - s)
            else:
                out[i, o] = 0.0


cdef void _accumulate_tangent(double[:, :, ::1] tprev, double[:, :, ::1] vbar,
                              double[:, ::1] dW) noexcept nogil:
    cdef Py_ssize_t n = tprev.shape[0], k = tprev.shape[1], nd = tprev.shape[2]
    cdef Py_ssize_t m = vbar.shape[1]
    cdef Py_ssize_t i, j, o, d
    cdef double acc
    for j in range(k):
        for o in range(m):
            acc = 0.0
            for i in range(n):
                for d in range(nd):
                    acc += tprev[i, j, d] * vbar[i, o, d]
            dW[j, o] += acc


cdef void _backprop_tangent(double[:, :, ::1] vbar, double[:, ::1] W,
                            double[:, :, ::1] ubar) noexcept nogil:
    cdef Py_ssize_t n = vbar.shape[0], m = vbar.shape[1], nd = vbar.shape[2]
    cdef Py_ssize_t k = W.shape[0]
    cdef Py_ssize_t i, j, o, d
    cdef double acc
    for i in range(n):
        for j in range(k):
            for d in range(nd):
                acc = 0.0
                for o in range(m):
                    acc += vbar[i, o, d] * W[j, o]
                ubar[i, j, d] = acc


cdef void _combine_abar(double[:, ::1] sp, double[:, ::1] ss, double[:, ::1] zbar,
                        double[:, :, ::1] v, double[:, :, ::1] ubar,
                        double[:, ::1] abar) noexcept nogil:
    """abar = act' * zbar + act'' * sum_d v * ubar (curvature of the tangent map)."""
    cdef Py_ssize_t n = zbar.shape[0], k = zbar.shape[1], nd = v.shape[2]
    cdef Py_ssize_t i, j, d
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for d in range(nd):
                acc += v[i, j, d] * ubar[i, j, d]
            abar[i, j] = sp[i, j] * zbar[i, j] + ss[i, j] * acc
