# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython MLP kernels mirroring backends/pure.py.

The matrix products go straight to BLAS dgemm; the win over the numpy
backend comes from fusing the whole forward/backward pass into one call,
skipping per-op dispatch and temporary allocation. Semantics must match
the pure backend (same loss, same ReLU-at-0 convention); bit-identity
across backends is not promised.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fmax
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


# All arrays here are C-contiguous row-major. Fortran BLAS sees the same
# memory transposed, so each product below is phrased as its transpose.

cdef void _affine(double[:, ::1] a, double[:, ::1] w, double[::1] b,
                  double[:, ::1] out) nogil:
    # out(n, o) = a(n, d) @ w(o, d)^T + b
    cdef int n = <int> a.shape[0], d = <int> a.shape[1], o = <int> w.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t i, j
    dgemm("T", "N", &o, &n, &d, &one,
          &w[0, 0], &d, &a[0, 0], &d, &zero, &out[0, 0], &o)
    for i in range(n):
        for j in range(o):
            out[i, j] += b[j]


cdef void _relu_inplace(double[:, ::1] z) nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] = fmax(z[i, j], 0.0)


def mlp_forward(cnp.ndarray inputs, list weights, list biases):
    cdef Py_ssize_t last = len(weights) - 1
    cdef Py_ssize_t k
    a = np.ascontiguousarray(inputs, dtype=np.float64)
    for k in range(len(weights)):
        w = np.ascontiguousarray(weights[k], dtype=np.float64)
        b = np.ascontiguousarray(biases[k], dtype=np.float64)
        z = np.empty((a.shape[0], w.shape[0]), dtype=np.float64)
        _affine(a, w, b, z)
        if k < last:
            _relu_inplace(z)
        a = z
    return a


def mlp_loss_grads(cnp.ndarray inputs, cnp.ndarray labels, list weights, list biases):
    cdef Py_ssize_t n = inputs.shape[0]
    cdef Py_ssize_t last = len(weights) - 1
    cdef Py_ssize_t k

    x = np.ascontiguousarray(inputs, dtype=np.float64)
    lab = np.ascontiguousarray(labels, dtype=np.int64)
    ws = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
    bs = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]

    activations = [x]
    pre = []
    a = x
    for k in range(len(ws)):
        z = np.empty((a.shape[0], ws[k].shape[0]), dtype=np.float64)
        _affine(a, ws[k], bs[k], z)
        pre.append(z.copy())
        if k < last:
            _relu_inplace(z)
        a = z
        activations.append(a)

    logits = activations[len(activations) - 1]
    delta = np.empty_like(logits)
    cdef double loss = _softmax_ce(logits, lab, delta)

    grad_w = [None] * len(ws)
    grad_b = [None] * len(ws)
    for k in range(last, -1, -1):
        gw = np.empty_like(ws[k])
        gb = np.empty_like(bs[k])
        _grad_layer(delta, activations[k], gw, gb)
        grad_w[k] = gw
        grad_b[k] = gb
        nxt = np.empty((n, ws[k].shape[1]), dtype=np.float64)
        _backprop_delta(delta, ws[k], nxt)
        if k > 0:
            _relu_mask(nxt, pre[k - 1])
        delta = nxt
    return loss, grad_w, grad_b, delta


cdef double _softmax_ce(double[:, ::1] logits, long[::1] labels,
                        double[:, ::1] delta) nogil:
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s, loss = 0.0, inv_n = 1.0 / n
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            delta[i, j] = exp(logits[i, j] - m)
            s += delta[i, j]
        loss -= (logits[i, labels[i]] - m - log(s)) * inv_n
        for j in range(c):
            delta[i, j] = delta[i, j] / s * inv_n
        delta[i, labels[i]] -= inv_n
    return loss


cdef void _grad_layer(double[:, ::1] delta, double[:, ::1] a_prev,
                      double[:, ::1] gw, double[::1] gb) nogil:
    # gw(o, d) = delta(n, o)^T @ a_prev(n, d), gb = delta.sum(axis=0)
    cdef int n = <int> delta.shape[0], o = <int> delta.shape[1]
    cdef int d = <int> a_prev.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t i, j
    dgemm("N", "T", &d, &o, &n, &one,
          &a_prev[0, 0], &d, &delta[0, 0], &o, &zero, &gw[0, 0], &d)
    gb[:] = 0.0
    for i in range(n):
        for j in range(o):
            gb[j] += delta[i, j]


cdef void _backprop_delta(double[:, ::1] delta, double[:, ::1] w,
                          double[:, ::1] out) nogil:
    # out(n, d) = delta(n, o) @ w(o, d)
    cdef int n = <int> delta.shape[0], o = <int> delta.shape[1]
    cdef int d = <int> w.shape[1]
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "N", &d, &n, &o, &one,
          &w[0, 0], &d, &delta[0, 0], &o, &zero, &out[0, 0], &d)


cdef void _relu_mask(double[:, ::1] delta, double[:, ::1] pre) nogil:
    cdef Py_ssize_t i, j
    for i in range(delta.shape[0]):
        for j in range(delta.shape[1]):
            if pre[i, j] <= 0.0:
                delta[i, j] = 0.0
