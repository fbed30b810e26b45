# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled similarity-scan kernels.

Accumulation is strictly left-to-right over the feature axis and the
extension is built with -ffp-contract=off, so results are bit-identical
to the pure-NumPy backend (which accumulates column by column in the
same order). Keep both implementations in lockstep when editing.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def cosine_scan(double[:, ::1] matrix, double[::1] query):
    """Cosine similarity of ``query`` against every row of ``matrix``.

    Returns an (n,) float64 array clamped to [-1, 1]. Raises ValueError
    on dimension mismatch or a zero-norm input.
    """
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef Py_ssize_t i, t
    cdef double qq = 0.0, num, rr, s, qnorm

    if query.shape[0] != d:
        raise ValueError(
            f"query dimension {query.shape[0]} != matrix dimension {d}"
        )
    for t in range(d):
        qq += query[t] * query[t]
    if qq == 0.0:
        raise ValueError("zero-norm query vector")
    qnorm = sqrt(qq)

    sims_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] sims = sims_arr
    for i in range(n):
        num = 0.0
        rr = 0.0
        for t in range(d):
            num += matrix[i, t] * query[t]
        for t in range(d):
            rr += matrix[i, t] * matrix[i, t]
        if rr == 0.0:
            raise ValueError(f"zero-norm stored vector at row {i}")
        s = num / (qnorm * sqrt(rr))
        if s > 1.0:
            s = 1.0
        elif s < -1.0:
            s = -1.0
        sims[i] = s
    return sims_arr


def topk_desc(double[::1] scores, Py_ssize_t k):
    """Indices of the k largest scores, descending, ties by lower index.

    Equivalent to a stable descending argsort truncated to k entries.
    """
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t m, i, j, pos, filled
    cdef double s

    if k < 0:
        raise ValueError("k must be non-negative")
    m = k if k < n else n
    if m == 0:
        return np.empty(0, dtype=np.int64)

    out_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    best_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] best = best_arr

    filled = 0
    for i in range(n):
        s = scores[i]
        if filled == m:
            # Full buffer: an incoming tie with the current worst loses
            # because it has the higher index.
            if s <= best[filled - 1]:
                continue
        # Insert before the first strictly smaller entry, keeping earlier
        # (lower-index) entries ahead on ties.
        pos = filled if filled < m else m - 1
        j = pos
        while j > 0 and best[j - 1] < s:
            best[j] = best[j - 1]
            out[j] = out[j - 1]
            j -= 1
        best[j] = s
        out[j] = i
        if filled < m:
            filled += 1
    return out_arr
