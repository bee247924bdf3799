# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see kernels_numpy for semantics)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv1d_fwd(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b,
               int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t Tout = (T + 2 * pad - k) // stride + 1
    out = np.empty((B, Cout, Tout), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t bi, o, tp, c, j, base, jlo, jhi, tlo, thi
    cdef double acc, wv
    if stride == 1:
        # unit stride keeps the inner loop contiguous in t on both sides
        for bi in range(B):
            for o in range(Cout):
                for tp in range(Tout):
                    y[bi, o, tp] = b[o]
                for c in range(Cin):
                    for j in range(k):
                        base = j - pad
                        tlo = -base if base < 0 else 0
                        thi = T - base if base + Tout > T else Tout
                        wv = w[o, c, j]
                        for tp in range(tlo, thi):
                            y[bi, o, tp] += wv * x[bi, c, tp + base]
        return out
    for bi in range(B):
        for o in range(Cout):
            for tp in range(Tout):
                base = tp * stride - pad
                jlo = -base if base < 0 else 0
                jhi = T - base if base + k > T else k
                acc = b[o]
                for c in range(Cin):
                    for j in range(jlo, jhi):
                        acc += x[bi, c, base + j] * w[o, c, j]
                y[bi, o, tp] = acc
    return out


def conv1d_bwd_x(double[:, :, ::1] gy, double[:, :, ::1] w, int stride,
                 int pad, int T):
    cdef Py_ssize_t B = gy.shape[0], Cout = gy.shape[1], Tout = gy.shape[2]
    cdef Py_ssize_t Cin = w.shape[1], k = w.shape[2]
    out = np.zeros((B, Cin, T), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t bi, o, tp, c, j, base, jlo, jhi, tlo, thi
    cdef double g, wv
    if stride == 1:
        for bi in range(B):
            for c in range(Cin):
                for o in range(Cout):
                    for j in range(k):
                        base = j - pad
                        tlo = -base if base < 0 else 0
                        thi = T - base if base + Tout > T else Tout
                        wv = w[o, c, j]
                        for tp in range(tlo, thi):
                            gx[bi, c, tp + base] += wv * gy[bi, o, tp]
        return out
    for bi in range(B):
        for o in range(Cout):
            for tp in range(Tout):
                base = tp * stride - pad
                jlo = -base if base < 0 else 0
                jhi = T - base if base + k > T else k
                g = gy[bi, o, tp]
                for c in range(Cin):
                    for j in range(jlo, jhi):
                        gx[bi, c, base + j] += g * w[o, c, j]
    return out


def conv1d_bwd_w(double[:, :, ::1] gy, double[:, :, ::1] x, int k,
                 int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = gy.shape[1], Tout = gy.shape[2]
    out = np.zeros((Cout, Cin, k), dtype=np.float64)
    cdef double[:, :, ::1] gw = out
    cdef Py_ssize_t bi, o, tp, c, j, base, jlo, jhi, tlo, thi
    cdef double g, acc
    if stride == 1:
        for bi in range(B):
            for o in range(Cout):
                for c in range(Cin):
                    for j in range(k):
                        base = j - pad
                        tlo = -base if base < 0 else 0
                        thi = T - base if base + Tout > T else Tout
                        acc = 0.0
                        for tp in range(tlo, thi):
                            acc += gy[bi, o, tp] * x[bi, c, tp + base]
                        gw[o, c, j] += acc
        return out
    for bi in range(B):
        for o in range(Cout):
            for tp in range(Tout):
                base = tp * stride - pad
                jlo = -base if base < 0 else 0
                jhi = T - base if base + k > T else k
                g = gy[bi, o, tp]
                for c in range(Cin):
                    for j in range(jlo, jhi):
                        gw[o, c, j] += g * x[bi, c, base + j]
    return out


def convt1d_fwd(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = w.shape[1], k = w.shape[2]
    out = np.empty((B, Cout, T * k), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t bi, o, t, c, j
    cdef double acc
    for bi in range(B):
        for o in range(Cout):
            for t in range(T):
                for j in range(k):
                    acc = b[o]
                    for c in range(Cin):
                        acc += x[bi, c, t] * w[c, o, j]
                    y[bi, o, t * k + j] = acc
    return out


def convt1d_bwd_x(double[:, :, ::1] gy, double[:, :, ::1] w):
    cdef Py_ssize_t Cin = w.shape[0], Cout = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t B = gy.shape[0], T = gy.shape[2] // k
    out = np.zeros((B, Cin, T), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t bi, o, t, c, j
    cdef double g
    for bi in range(B):
        for o in range(Cout):
            for t in range(T):
                for j in range(k):
                    g = gy[bi, o, t * k + j]
                    for c in range(Cin):
                        gx[bi, c, t] += g * w[c, o, j]
    return out


def convt1d_bwd_w(double[:, :, ::1] gy, double[:, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = gy.shape[1], k = gy.shape[2] // T
    out = np.zeros((Cin, Cout, k), dtype=np.float64)
    cdef double[:, :, ::1] gw = out
    cdef Py_ssize_t bi, o, t, c, j
    cdef double g
    for bi in range(B):
        for o in range(Cout):
            for t in range(T):
                for j in range(k):
                    g = gy[bi, o, t * k + j]
                    for c in range(Cin):
                        gw[c, o, j] += g * x[bi, c, t]
    return out


def maxpool1d_fwd(double[:, :, ::1] x, int window):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Tout = T // window
    out = np.empty((B, C, Tout), dtype=np.float64)
    idx_out = np.empty((B, C, Tout), dtype=np.int64)
    cdef double[:, :, ::1] y = out
    cdef long[:, :, ::1] idx = idx_out
    cdef Py_ssize_t bi, c, t, j, best_j
    cdef double best, v
    for bi in range(B):
        for c in range(C):
            for t in range(Tout):
                best = x[bi, c, t * window]
                best_j = 0
                for j in range(1, window):
                    v = x[bi, c, t * window + j]
                    if v > best:
                        best = v
                        best_j = j
                y[bi, c, t] = best
                idx[bi, c, t] = best_j
    return out, idx_out


def maxpool1d_bwd(double[:, :, ::1] gy, long[:, :, ::1] idx, int window, int T):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1], Tout = gy.shape[2]
    out = np.zeros((B, C, T), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t bi, c, t
    for bi in range(B):
        for c in range(C):
            for t in range(Tout):
                gx[bi, c, t * window + idx[bi, c, t]] = gy[bi, c, t]
    return out
