"""Minimum-cost bipartite assignment (Hungarian method, shortest augmenting paths)."""

from __future__ import annotations

import numpy as np


def _solve_square_or_wide(C: np.ndarray) -> np.ndarray:
    """Rows <= cols; returns col index for each row."""
    n, m = C.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: row (1-based) matched to col j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.nonzero(used)[0]
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assign = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            assign[p[j] - 1] = j - 1
    return assign


def hungarian(cost) -> list[tuple[int, int]]:
    """Solve a rectangular assignment problem.

    ``cost`` may contain ``inf`` or ``nan`` for forbidden pairs. The solver
    first maximises the number of allowed pairs and then minimises their
    total cost; forbidden pairs are never returned, so a row whose every
    entry is forbidden stays unassigned. Returns ``(row, col)`` pairs sorted
    by row.
    """
    C = np.array(cost, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = C.shape
    if n == 0 or m == 0:
        return []
    allowed = np.isfinite(C)
    if not allowed.any():
        return []
    finite = C[allowed]
    lo, hi = finite.min(), finite.max()
    work = np.where(allowed, C - lo, 0.0)
    big = (hi - lo + 1.0) * (min(n, m) + 1)
    work[~allowed] = big

    if n <= m:
        cols = _solve_square_or_wide(work)
        pairs = [(r, int(c)) for r, c in enumerate(cols)]
    else:
        rows = _solve_square_or_wide(work.T)
        pairs = sorted((int(r), c) for c, r in enumerate(rows))
    return [(r, c) for r, c in pairs if c >= 0 and allowed[r, c]]


def assignment_cost(cost, pairs) -> float:
    C = np.asarray(cost, dtype=float)
    return float(sum(C[r, c] for r, c in pairs))
