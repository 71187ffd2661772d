# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Same contract as ``adann.kernels_ref`` (see that module for semantics);
plain C loops instead of BLAS calls.  Results agree with the reference
backend to floating-point rounding; integer outputs (Viterbi decisions)
agree exactly except on exact metric ties, where both backends keep the
lowest candidate index.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "compiled"

ctypedef cnp.float64_t f64


cdef _dense(const f64[:, ::1] h, const f64[:, ::1] w, const f64[::1] b):
    cdef Py_ssize_t n = h.shape[0], n_in = h.shape[1], n_out = w.shape[0]
    out_arr = np.empty((n, n_out))
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t i, o, j
    cdef f64 acc
    for i in range(n):
        for o in range(n_out):
            acc = b[o]
            for j in range(n_in):
                acc += w[o, j] * h[i, j]
            out[i, o] = acc
    return out_arr


cdef _relu2d(const f64[:, ::1] a):
    cdef Py_ssize_t n = a.shape[0], d = a.shape[1]
    out_arr = np.empty((n, d))
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(d):
            out[i, j] = a[i, j] if a[i, j] > 0.0 else 0.0
    return out_arr


cdef _softmax_rows(const f64[:, ::1] logits):
    cdef Py_ssize_t n = logits.shape[0], m = logits.shape[1]
    out_arr = np.empty((n, m))
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef f64 mx, total
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, m):
            if logits[i, j] > mx:
                mx = logits[i, j]
        total = 0.0
        for j in range(m):
            out[i, j] = exp(logits[i, j] - mx)
            total += out[i, j]
        for j in range(m):
            out[i, j] /= total
    return out_arr


def batch_forward(weights, biases, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n_mats = len(weights)
    pre_acts = []
    post_acts = [x]
    h = x
    for k in range(n_mats):
        a = _dense(h, np.ascontiguousarray(weights[k], dtype=np.float64),
                   np.ascontiguousarray(biases[k], dtype=np.float64))
        pre_acts.append(a)
        if k < n_mats - 1:
            h = _relu2d(a)
            post_acts.append(h)
    probs = _softmax_rows(pre_acts[n_mats - 1])
    return pre_acts, post_acts, probs


cdef _backward_layer(const f64[:, ::1] g, const f64[:, ::1] post,
                     const f64[:, ::1] w, bint want_params, bint mask_below):
    """One layer of the backward sweep.

    Returns (dW, db, g_prev) where dW/db are None unless want_params;
    g_prev is g @ w, masked by post > 0 when mask_below is set.
    """
    cdef Py_ssize_t n = g.shape[0], n_out = g.shape[1], n_in = w.shape[1]
    cdef Py_ssize_t i, o, j
    cdef f64 acc

    dw_arr = None
    db_arr = None
    cdef f64[:, ::1] dw
    cdef f64[::1] db
    if want_params:
        dw_arr = np.zeros((n_out, n_in))
        db_arr = np.zeros(n_out)
        dw = dw_arr
        db = db_arr
        for i in range(n):
            for o in range(n_out):
                acc = g[i, o]
                db[o] += acc
                for j in range(n_in):
                    dw[o, j] += acc * post[i, j]

    gprev_arr = np.empty((n, n_in))
    cdef f64[:, ::1] gp = gprev_arr
    for i in range(n):
        for j in range(n_in):
            acc = 0.0
            for o in range(n_out):
                acc += g[i, o] * w[o, j]
            if mask_below and not post[i, j] > 0.0:
                acc = 0.0
            gp[i, j] = acc
    return dw_arr, db_arr, gprev_arr


def batch_backward_params(weights, post_acts, g_last):
    n_mats = len(weights)
    d_weights = [None] * n_mats
    d_biases = [None] * n_mats
    g = np.ascontiguousarray(g_last, dtype=np.float64)
    for k in range(n_mats - 1, -1, -1):
        post = np.ascontiguousarray(post_acts[k], dtype=np.float64)
        w = np.ascontiguousarray(weights[k], dtype=np.float64)
        dw, db, g = _backward_layer(g, post, w, True, k > 0)
        d_weights[k] = dw
        d_biases[k] = db
    return d_weights, d_biases, g


def batch_backward_input(weights, post_acts, g_last):
    n_mats = len(weights)
    g = np.ascontiguousarray(g_last, dtype=np.float64)
    for k in range(n_mats - 1, -1, -1):
        post = np.ascontiguousarray(post_acts[k], dtype=np.float64)
        w = np.ascontiguousarray(weights[k], dtype=np.float64)
        _, _, g = _backward_layer(g, post, w, False, k > 0)
    return g


def lms_block(amps_ext, observed, taps, mu):
    cdef const f64[::1] x = np.ascontiguousarray(amps_ext, dtype=np.float64)
    cdef const f64[::1] y = np.ascontiguousarray(observed, dtype=np.float64)
    h_arr = np.array(taps, dtype=np.float64)
    cdef f64[::1] h = h_arr
    cdef Py_ssize_t n_taps = h.shape[0], n = y.shape[0]
    cdef Py_ssize_t i, j, base
    cdef f64 acc, step, mu_c = mu
    for i in range(n):
        base = i + n_taps - 1
        acc = 0.0
        for j in range(n_taps):
            acc += h[j] * x[base - j]
        step = mu_c * (y[i] - acc)
        for j in range(n_taps):
            h[j] += step * x[base - j]
    return h_arr


def viterbi_block(observed, taps, levels, init_metrics=None):
    cdef const f64[::1] obs = np.ascontiguousarray(observed, dtype=np.float64)
    cdef const f64[::1] h = np.ascontiguousarray(taps, dtype=np.float64)
    cdef const f64[::1] lev = np.ascontiguousarray(levels, dtype=np.float64)
    cdef Py_ssize_t n = obs.shape[0], n_taps = h.shape[0], m = lev.shape[0]
    cdef Py_ssize_t i, j, a, s, t, state
    cdef f64 acc, best, c, diff

    decisions_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] decisions = decisions_arr

    if n_taps == 1:
        best = 0.0 if init_metrics is None else float(init_metrics[0])
        acc = best
        for i in range(n):
            best = (obs[i] - h[0] * lev[0]) ** 2
            a = 0
            for j in range(1, m):
                c = (obs[i] - h[0] * lev[j]) ** 2
                if c < best:
                    best = c
                    a = j
            decisions[i] = a
            acc += best
        return decisions_arr, np.array([acc])

    cdef Py_ssize_t n_states = m ** (n_taps - 1)
    cdef Py_ssize_t shift = m ** (n_taps - 2)

    # pred[s * m + a]: predicted sample for state s extended by symbol a.
    pred_arr = np.empty(n_states * m)
    cdef f64[::1] pred = pred_arr
    for s in range(n_states):
        acc = 0.0
        state = s
        for j in range(1, n_taps):
            acc += h[j] * lev[state % m]
            state //= m
        for a in range(m):
            pred[s * m + a] = acc + h[0] * lev[a]

    metrics_arr = (np.zeros(n_states) if init_metrics is None
                   else np.array(init_metrics, dtype=np.float64))
    cdef f64[::1] metrics = metrics_arr
    scratch_arr = np.empty(n_states)
    cdef f64[::1] scratch = scratch_arr
    backptr_arr = np.empty((n, n_states), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] backptr = backptr_arr
    cdef Py_ssize_t src_base, bt

    for i in range(n):
        for s in range(n_states):
            a = s % m
            src_base = s // m
            best = 0.0
            bt = 0
            for t in range(m):
                state = src_base + t * shift
                diff = obs[i] - pred[state * m + a]
                c = metrics[state] + diff * diff
                if t == 0 or c < best:
                    best = c
                    bt = t
            scratch[s] = best
            backptr[i, s] = <cnp.uint8_t> bt
        metrics[:] = scratch

    state = 0
    best = metrics[0]
    for s in range(1, n_states):
        if metrics[s] < best:
            best = metrics[s]
            state = s
    for i in range(n - 1, -1, -1):
        decisions[i] = state % m
        state = (state // m) + (<Py_ssize_t> backptr[i, state]) * shift
    return decisions_arr, metrics_arr
