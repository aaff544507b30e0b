# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled greedy threshold clustering over unit vectors.

Same contract as ``dialogforge._kernels.fallback.greedy_cluster``; the
Python wrapper selects whichever is importable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def greedy_cluster(object matrix_obj, double epsilon):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] matrix = \
        np.ascontiguousarray(matrix_obj, dtype=np.float64)
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] foci_buf = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] assign = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] foci = foci_buf
    cdef cnp.int64_t[::1] assign_v = assign
    cdef cnp.float64_t[:, ::1] m = matrix

    cdef Py_ssize_t k = 0
    cdef Py_ssize_t i, j, c, f, best_f
    cdef double dot, best
    cdef bint is_focus

    # Pass 1: a row becomes a focus only when no earlier focus already
    # absorbs it (similarity strictly greater than epsilon).
    for i in range(n):
        is_focus = True
        for j in range(k):
            f = foci[j]
            dot = 0.0
            for c in range(d):
                dot += m[i, c] * m[f, c]
            if dot > epsilon:
                is_focus = False
                break
        if is_focus:
            foci[k] = i
            assign_v[i] = i
            k += 1
        else:
            assign_v[i] = -1

    # Pass 2: assign every absorbed row to its most similar focus;
    # strict > keeps the earliest focus on ties.
    for i in range(n):
        if assign_v[i] == i:
            continue
        best = -2.0
        best_f = foci[0]
        for j in range(k):
            f = foci[j]
            dot = 0.0
            for c in range(d):
                dot += m[i, c] * m[f, c]
            if dot > best:
                best = dot
                best_f = f
        assign_v[i] = best_f

    return foci_buf[:k].copy(), assign
