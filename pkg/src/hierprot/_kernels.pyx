# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def contact_pairs(const double[:, ::1] coords, double threshold):
    cdef Py_ssize_t n = coords.shape[0]
    cdef Py_ssize_t i, j, k = 0
    cdef double dx, dy, dz, t2 = threshold * threshold
    cdef Py_ssize_t cap = 16 * n + 16
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ii = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] jj = np.empty(cap, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            dx = coords[i, 0] - coords[j, 0]
            dy = coords[i, 1] - coords[j, 1]
            dz = coords[i, 2] - coords[j, 2]
            # strict inequality on the squared distance matches sqrt(d2) < threshold
            if dx * dx + dy * dy + dz * dz < t2:
                if k == cap:
                    cap *= 2
                    ii = np.resize(ii, cap)
                    jj = np.resize(jj, cap)
                ii[k] = i
                jj[k] = j
                k += 1
    return ii[:k].copy(), jj[:k].copy()


def nw_align(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b,
             double match, double mismatch, double gap):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef double diag, up, left, best
    cdef cnp.ndarray[cnp.float64_t, ndim=2] score = np.empty((n + 1, m + 1))
    cdef cnp.ndarray[cnp.int8_t, ndim=2] move = np.zeros((n + 1, m + 1), dtype=np.int8)
    for i in range(n + 1):
        score[i, 0] = i * gap
        move[i, 0] = 1
    for j in range(m + 1):
        score[0, j] = j * gap
        move[0, j] = 2
    move[0, 0] = 0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = score[i - 1, j - 1] + (match if a[i - 1] == b[j - 1] else mismatch)
            up = score[i - 1, j] + gap
            left = score[i, j - 1] + gap
            best = diag
            move[i, j] = 0
            if up > best:
                best = up
                move[i, j] = 1
            if left > best:
                best = left
                move[i, j] = 2
            score[i, j] = best
    cdef Py_ssize_t identities = 0, length = 0
    i = n
    j = m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and move[i, j] == 0:
            if a[i - 1] == b[j - 1]:
                identities += 1
            i -= 1
            j -= 1
        elif i > 0 and (j == 0 or move[i, j] == 1):
            i -= 1
        else:
            j -= 1
        length += 1
    return score[n, m], identities, length
