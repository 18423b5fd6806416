"""Pure-Python fallback for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def contact_pairs(coords, threshold):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    ii, jj = np.nonzero(np.triu(d2 < threshold * threshold, k=1))
    return ii.astype(np.int64), jj.astype(np.int64)


def nw_align(a, b, match, mismatch, gap):
    n, m = len(a), len(b)
    score = [[0.0] * (m + 1) for _ in range(n + 1)]
    move = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        score[i][0] = i * gap
        move[i][0] = 1
    for j in range(1, m + 1):
        score[0][j] = j * gap
        move[0][j] = 2
    for i in range(1, n + 1):
        ai = a[i - 1]
        row, prev = score[i], score[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1] + (match if ai == b[j - 1] else mismatch)
            mv = 0
            up = prev[j] + gap
            if up > best:
                best, mv = up, 1
            left = row[j - 1] + gap
            if left > best:
                best, mv = left, 2
            row[j] = best
            move[i][j] = mv
    identities = length = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and move[i][j] == 0:
            identities += a[i - 1] == b[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and (j == 0 or move[i][j] == 1):
            i -= 1
        else:
            j -= 1
        length += 1
    return score[n][m], int(identities), length
