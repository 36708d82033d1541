# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, isfinite
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND_NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _value(uint64_t key, uint64_t i) nogil:
    return _mix(key + (i + 1) * GOLDEN)


cdef inline double _unit(uint64_t z) nogil:
    return (<double>(z >> 11) + 1.0) * INV53


cdef inline double _normal(uint64_t key, uint64_t c) nogil:
    cdef double u1 = _unit(_value(key, c))
    cdef double u2 = _unit(_value(key, c + 1))
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] flat = np.ascontiguousarray(z.ravel())
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _mix(flat[i])
    return out.reshape(z.shape)


def stream_u64(uint64_t key, uint64_t start, Py_ssize_t n):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _value(key, start + <uint64_t>i)
    return out


def uniforms(uint64_t key, uint64_t start, Py_ssize_t n):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _unit(_value(key, start + <uint64_t>i))
    return out


def normals(uint64_t key, uint64_t start, Py_ssize_t n):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = _normal(key, start + 2 * <uint64_t>i)
    return out


def quadratic_pgd(A, C, theta0, alphas, keys, uint64_t start, log_steps,
                  bint record_params, double div_limit):
    cdef const double[:, ::1] a_mat = np.ascontiguousarray(A, dtype=np.float64)
    cdef bint noisy = C is not None
    cdef const double[:, ::1] c_mat = np.ascontiguousarray(C if noisy else np.zeros((1, 1)), dtype=np.float64)
    cdef const double[:, ::1] th0 = np.ascontiguousarray(theta0, dtype=np.float64)
    cdef const double[::1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef const cnp.uint64_t[::1] ks = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef const int64_t[::1] ls = np.ascontiguousarray(log_steps, dtype=np.int64)
    cdef Py_ssize_t S = th0.shape[0], d = th0.shape[1], K = al.shape[0], nlog = ls.shape[0]

    loss_np = np.full((S, nlog), np.nan)
    gn_np = np.full((S, nlog), np.nan)
    nn_np = np.full((S, nlog), np.nan)
    if record_params:
        params_np = np.full((S, nlog, d), np.nan)
    else:
        params_np = np.full((1, 1, d), np.nan)
    div_step_np = np.full(S, -1, dtype=np.int64)
    div_row_np = np.full((S, 3), np.nan)
    cdef double[:, ::1] loss_out = loss_np
    cdef double[:, ::1] gn_out = gn_np
    cdef double[:, ::1] nn_out = nn_np
    cdef double[:, :, ::1] par = params_np
    cdef int64_t[::1] div_step = div_step_np
    cdef double[:, ::1] div_row = div_row_np

    cdef double[::1] th = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] xi = np.empty(d)
    cdef double[::1] eps = np.empty(d)
    cdef Py_ssize_t s, k, i, j, ptr
    cdef double a, acc, loss, gn, nn
    cdef uint64_t key, base

    with nogil:
        for s in range(S):
            key = ks[s]
            for i in range(d):
                th[i] = th0[s, i]
            nn = 0.0
            ptr = 0
            for k in range(K + 1):
                if k > 0:
                    a = al[k - 1]
                    if noisy:
                        base = start + 2 * <uint64_t>((k - 1) * d)
                        for j in range(d):
                            xi[j] = _normal(key, base + 2 * <uint64_t>j)
                        nn = 0.0
                        for i in range(d):
                            acc = 0.0
                            for j in range(d):
                                acc = acc + c_mat[i, j] * xi[j]
                            eps[i] = a * acc
                            nn = nn + eps[i] * eps[i]
                        nn = sqrt(nn)
                        for i in range(d):
                            th[i] = th[i] - a * g[i] + eps[i]
                    else:
                        for i in range(d):
                            th[i] = th[i] - a * g[i]
                loss = 0.0
                gn = 0.0
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc = acc + a_mat[i, j] * th[j]
                    g[i] = acc
                    loss = loss + th[i] * acc
                    gn = gn + acc * acc
                loss = 0.5 * loss
                gn = sqrt(gn)
                if not (isfinite(loss) and loss <= div_limit):
                    div_step[s] = k
                    div_row[s, 0] = loss
                    div_row[s, 1] = gn
                    div_row[s, 2] = nn
                    break
                if ptr < nlog and ls[ptr] == k:
                    loss_out[s, ptr] = loss
                    gn_out[s, ptr] = gn
                    nn_out[s, ptr] = nn
                    if record_params:
                        for i in range(d):
                            par[s, ptr, i] = th[i]
                    ptr += 1
    return loss_np, gn_np, nn_np, (params_np if record_params else None), div_step_np, div_row_np
