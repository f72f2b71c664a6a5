# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled mean-pairwise distance kernels.

Each kernel averages psi(a_i, b_j) over the full cross product of two
clouds. Accumulation is sequential: pairs in row-major order, coordinates
in index order, one scalar accumulator. That makes the result bitwise
identical to a naive scalar double loop, which is part of the scoring
contract. Compiled without fast-math on purpose: IEEE evaluation order is
load-bearing here.
"""

from libc.math cimport fabs, sqrt

import numpy as np

BRAYCURTIS = 0
CANBERRA = 1
CHEBYSHEV = 2
CITYBLOCK = 3
CORRELATION = 4
COSINE = 5
EUCLIDEAN = 6


cdef void _row_sumsq(const double[:, ::1] x, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(x.shape[0]):
        s = 0.0
        for k in range(x.shape[1]):
            s += x[i, k] * x[i, k]
        out[i] = s


cdef void _center_rows(const double[:, ::1] x, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s, mu
    for i in range(x.shape[0]):
        s = 0.0
        for k in range(x.shape[1]):
            s += x[i, k]
        mu = s / (<double> x.shape[1])
        for k in range(x.shape[1]):
            out[i, k] = x[i, k] - mu


cdef double _mean_cityblock(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, s
    for i in range(m):
        for j in range(n):
            s = 0.0
            for k in range(d):
                s += fabs(a[i, k] - b[j, k])
            total += s
    return total / ((<double> m) * (<double> n))


cdef double _mean_euclidean(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, s, diff
    for i in range(m):
        for j in range(n):
            s = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                s += diff * diff
            total += sqrt(s)
    return total / ((<double> m) * (<double> n))


cdef double _mean_chebyshev(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, mx, v
    for i in range(m):
        for j in range(n):
            mx = 0.0
            for k in range(d):
                v = fabs(a[i, k] - b[j, k])
                if v > mx:
                    mx = v
            total += mx
    return total / ((<double> m) * (<double> n))


cdef double _mean_canberra(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, s, num, den
    for i in range(m):
        for j in range(n):
            s = 0.0
            for k in range(d):
                num = fabs(a[i, k] - b[j, k])
                den = fabs(a[i, k]) + fabs(b[j, k])
                if den != 0.0:
                    s += num / den
            total += s
    return total / ((<double> m) * (<double> n))


cdef double _mean_braycurtis(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, sn, sd, psi
    for i in range(m):
        for j in range(n):
            sn = 0.0
            sd = 0.0
            for k in range(d):
                sn += fabs(a[i, k] - b[j, k])
                sd += fabs(a[i, k] + b[j, k])
            if sd == 0.0:
                psi = 0.0 if sn == 0.0 else 1.0
            else:
                psi = sn / sd
            total += psi
    return total / ((<double> m) * (<double> n))


cdef double _mean_cosine(const double[:, ::1] a, const double[:, ::1] b,
                         const double[::1] na2, const double[::1] nb2) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, pa2, pb2, dot, psi
    for i in range(m):
        pa2 = na2[i]
        for j in range(n):
            pb2 = nb2[j]
            if pa2 == 0.0 and pb2 == 0.0:
                psi = 0.0
            elif pa2 == 0.0 or pb2 == 0.0:
                psi = 1.0
            else:
                dot = 0.0
                for k in range(d):
                    dot += a[i, k] * b[j, k]
                psi = 1.0 - dot / (sqrt(pa2) * sqrt(pb2))
                if psi < 0.0:
                    psi = 0.0
                elif psi > 2.0:
                    psi = 2.0
            total += psi
    return total / ((<double> m) * (<double> n))


def mean_pairwise(int kind, const double[:, ::1] a not None, const double[:, ::1] b not None):
    """Mean pairwise distance over the cross product of two float64 clouds."""
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch between clouds")
    cdef double out
    cdef double[::1] na2, nb2
    cdef double[:, ::1] ca, cb

    if kind == CITYBLOCK:
        with nogil:
            out = _mean_cityblock(a, b)
    elif kind == EUCLIDEAN:
        with nogil:
            out = _mean_euclidean(a, b)
    elif kind == CHEBYSHEV:
        with nogil:
            out = _mean_chebyshev(a, b)
    elif kind == CANBERRA:
        with nogil:
            out = _mean_canberra(a, b)
    elif kind == BRAYCURTIS:
        with nogil:
            out = _mean_braycurtis(a, b)
    elif kind == COSINE:
        na2 = np.empty(a.shape[0])
        nb2 = np.empty(b.shape[0])
        with nogil:
            _row_sumsq(a, na2)
            _row_sumsq(b, nb2)
            out = _mean_cosine(a, b, na2, nb2)
    elif kind == CORRELATION:
        ca = np.empty((a.shape[0], a.shape[1]))
        cb = np.empty((b.shape[0], b.shape[1]))
        na2 = np.empty(a.shape[0])
        nb2 = np.empty(b.shape[0])
        with nogil:
            _center_rows(a, ca)
            _center_rows(b, cb)
            _row_sumsq(ca, na2)
            _row_sumsq(cb, nb2)
            out = _mean_cosine(ca, cb, na2, nb2)
    else:
        raise ValueError(f"unknown kernel kind code {kind}")
    return out
