# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation kernels.

Arithmetic order matches ganens._native.fallback exactly: squared distances
accumulate coordinate by coordinate, left to right, without FMA contraction.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef void _knn_rows(const double[:, ::1] q, const double[:, ::1] g, double[:, ::1] out,
                    Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t i, j, c, pos
    cdef Py_ssize_t ng = g.shape[0], d = q.shape[1], k = out.shape[1]
    cdef double acc, diff
    for i in range(lo, hi):
        for pos in range(k):
            out[i, pos] = INFINITY
        for j in range(ng):
            acc = 0.0
            for c in range(d):
                diff = q[i, c] - g[j, c]
                acc = acc + diff * diff
            if acc >= out[i, k - 1]:
                continue
            pos = k - 1
            while pos > 0 and out[i, pos - 1] > acc:
                out[i, pos] = out[i, pos - 1]
                pos -= 1
            out[i, pos] = acc
        for pos in range(k):
            out[i, pos] = sqrt(out[i, pos])


def knn_rows(const double[:, ::1] queries, const double[:, ::1] generated, double[:, ::1] out,
             Py_ssize_t lo, Py_ssize_t hi):
    """Fill ``out[lo:hi]`` with sorted k smallest distances; releases the GIL."""
    with nogil:
        _knn_rows(queries, generated, out, lo, hi)


def signrank_tail_count(const long long[::1] ranks2, long long observed2):
    """Count sign patterns whose doubled positive-rank sum S satisfies
    |2S - T| >= |2*observed - T|, with T the doubled total. Gray-code walk."""
    cdef Py_ssize_t n = ranks2.shape[0], bit
    cdef long long total = 0, s = 0, dev_obs, dev, count = 0
    cdef unsigned long long idx, n_patterns, gray, prev = 0, changed
    for bit in range(n):
        total += ranks2[bit]
    dev_obs = 2 * observed2 - total
    if dev_obs < 0:
        dev_obs = -dev_obs
    n_patterns = (<unsigned long long>1) << n
    with nogil:
        for idx in range(n_patterns):
            gray = idx ^ (idx >> 1)
            changed = gray ^ prev
            if changed:
                bit = 0
                while not (changed >> bit) & 1:
                    bit += 1
                if (gray >> bit) & 1:
                    s += ranks2[bit]
                else:
                    s -= ranks2[bit]
            prev = gray
            dev = 2 * s - total
            if dev < 0:
                dev = -dev
            if dev >= dev_obs:
                count += 1
    return count
