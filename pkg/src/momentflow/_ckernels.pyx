# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bracket kernels; same contract as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"


cdef void _unpack(const double[::1] v, Py_ssize_t n, double[:, :, ::1] c) noexcept nogil:
    cdef Py_ssize_t a, b, k, q = 0
    for a in range(n):
        for k in range(n):
            c[a, a, k] = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            for k in range(n):
                c[a, b, k] = v[q * n + k]
                c[b, a, k] = -v[q * n + k]
            q += 1


cdef void _act(const double[:, ::1] X, const double[:, :, ::1] c, Py_ssize_t n,
               double[::1] out) noexcept nogil:
    cdef Py_ssize_t a, b, k, l, p, q = 0
    cdef double s
    for a in range(n):
        for b in range(a + 1, n):
            for k in range(n):
                s = 0.0
                for l in range(n):
                    s += X[k, l] * c[a, b, l]
                for p in range(n):
                    s -= X[p, a] * c[p, b, k] + X[p, b] * c[a, p, k]
                out[q * n + k] = s
            q += 1


cdef void _moment(const double[:, :, ::1] c, Py_ssize_t n, double[:, ::1] M) noexcept nogil:
    cdef Py_ssize_t a, b, k, l, p
    cdef double s
    for k in range(n):
        for l in range(k, n):
            s = 0.0
            for a in range(n):
                for b in range(n):
                    s += c[a, b, k] * c[a, b, l]
            for b in range(n):
                for p in range(n):
                    s -= 2.0 * c[k, b, p] * c[l, b, p]
            M[k, l] = s
            M[l, k] = s


def pair_index(n):
    rows, cols = np.triu_indices(n, k=1)
    return rows, cols


def unpack(v, Py_ssize_t n):
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    c = np.empty((n, n, n), dtype=np.float64)
    _unpack(vv, n, c)
    return c


def pack(c):
    n = c.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    return np.ascontiguousarray(c[rows, cols, :]).ravel()


def act_packed(X, v, Py_ssize_t n):
    cdef const double[:, ::1] XX = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, :, ::1] c = np.empty((n, n, n), dtype=np.float64)
    out = np.empty(vv.shape[0], dtype=np.float64)
    cdef double[::1] oo = out
    with nogil:
        _unpack(vv, n, c)
        _act(XX, c, n, oo)
    return out


def moment_packed(v, Py_ssize_t n):
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, :, ::1] c = np.empty((n, n, n), dtype=np.float64)
    M = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] MM = M
    with nogil:
        _unpack(vv, n, c)
        _moment(c, n, MM)
    return M


def sphere_field(v, Py_ssize_t n, double scale):
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t dim = vv.shape[0], i, k, l
    cdef double[:, :, ::1] c = np.empty((n, n, n), dtype=np.float64)
    cdef double[:, ::1] M = np.empty((n, n), dtype=np.float64)
    out = np.empty(dim, dtype=np.float64)
    cdef double[::1] oo = out
    cdef double nsq = 0.0, msq = 0.0, gsq = 0.0, coef, g
    with nogil:
        _unpack(vv, n, c)
        _moment(c, n, M)
        _act(M, c, n, oo)
        for i in range(dim):
            nsq += vv[i] * vv[i]
        nsq *= 2.0
        for k in range(n):
            for l in range(n):
                msq += M[k, l] * M[k, l]
        coef = 4.0 / (nsq * nsq)
        for i in range(dim):
            g = coef * (oo[i] - (msq / nsq) * vv[i])
            gsq += g * g
            oo[i] = -scale * g
    return out, msq / (nsq * nsq), sqrt(2.0 * gsq)


def transport_packed(g, ginv, v, Py_ssize_t n):
    cdef const double[:, ::1] G = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[:, ::1] H = np.ascontiguousarray(ginv, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, :, ::1] c = np.empty((n, n, n), dtype=np.float64)
    cdef double[:, :, ::1] A = np.empty((n, n, n), dtype=np.float64)
    cdef double[:, :, ::1] B = np.empty((n, n, n), dtype=np.float64)
    out = np.empty(vv.shape[0], dtype=np.float64)
    cdef double[::1] oo = out
    cdef Py_ssize_t a, b, i, j, k, l, q = 0
    cdef double s
    with nogil:
        _unpack(vv, n, c)
        # A[i, b, l] = sum_j c[i, j, l] H[j, b]
        for i in range(n):
            for b in range(n):
                for l in range(n):
                    s = 0.0
                    for j in range(n):
                        s += c[i, j, l] * H[j, b]
                    A[i, b, l] = s
        # B[a, b, l] = sum_i H[i, a] A[i, b, l]
        for a in range(n):
            for b in range(a + 1, n):
                for l in range(n):
                    s = 0.0
                    for i in range(n):
                        s += H[i, a] * A[i, b, l]
                    B[a, b, l] = s
        for a in range(n):
            for b in range(a + 1, n):
                for k in range(n):
                    s = 0.0
                    for l in range(n):
                        s += G[k, l] * B[a, b, l]
                    oo[q * n + k] = s
                q += 1
    return out
