"""Compiled dynamic-programming kernels shared by the curve distances and the
template scorer."""

import numpy as np
from numba import njit


@njit(cache=True)
def dtw_from_cost(cost):
    n, m = cost.shape
    acc = np.empty((n, m))
    acc[0, 0] = cost[0, 0]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        for j in range(1, m):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i, j] + best
    return acc[n - 1, m - 1]


@njit(cache=True)
def dfd_from_dist(dist):
    n, m = dist.shape
    acc = np.empty((n, m))
    acc[0, 0] = dist[0, 0]
    for i in range(1, n):
        acc[i, 0] = max(acc[i - 1, 0], dist[i, 0])
    for j in range(1, m):
        acc[0, j] = max(acc[0, j - 1], dist[0, j])
    for i in range(1, n):
        for j in range(1, m):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = max(dist[i, j], best)
    return acc[n - 1, m - 1]


@njit(cache=True)
def subsequence_dtw(query, ref):
    """Cost of aligning all of ``query`` to the best contiguous stretch of ``ref``.

    Rows of both arrays are feature vectors; local cost is Euclidean.
    """
    n, d = query.shape
    m = ref.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for j in range(m):
        s = 0.0
        for k in range(d):
            diff = query[0, k] - ref[j, k]
            s += diff * diff
        prev[j] = np.sqrt(s)
    for i in range(1, n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                diff = query[i, k] - ref[j, k]
                s += diff * diff
            c = np.sqrt(s)
            best = prev[j]
            if j > 0:
                if prev[j - 1] < best:
                    best = prev[j - 1]
                if cur[j - 1] < best:
                    best = cur[j - 1]
            cur[j] = c + best
        for j in range(m):
            prev[j] = cur[j]
    out = prev[0]
    for j in range(1, m):
        if prev[j] < out:
            out = prev[j]
    return out
