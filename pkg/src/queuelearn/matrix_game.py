"""Two-player zero-sum matrix games.

The row player *minimizes* ``d^T M a``.  Games are solved exactly by a
dense tableau simplex (Bland's rule, so degenerate games cannot cycle);
fictitious play is kept as an independent, slower route whose duality gap
is certified the same way.
"""
from __future__ import annotations

import numpy as np
from numba import njit

GAP_TOL = 1e-8
_EPS = 1e-12


@njit(cache=True)
def simplex_game(M):
    """Return ``(row, col, value)`` for the minimizing row player of ``M``."""
    p, q = M.shape
    shift = 1.0 - M.min()
    ncols = p + q + 1
    tab = np.zeros((q + 1, ncols))
    for r in range(q):
        for i in range(p):
            tab[r, i] = M[i, r] + shift
        tab[r, p + r] = 1.0
        tab[r, ncols - 1] = 1.0
    for i in range(p):
        tab[q, i] = -1.0
    basis = np.empty(q, dtype=np.int64)
    for r in range(q):
        basis[r] = p + r

    while True:
        enter = -1
        for j in range(p + q):
            if tab[q, j] < -_EPS:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for r in range(q):
            if tab[r, enter] > _EPS:
                ratio = tab[r, ncols - 1] / tab[r, enter]
                if ratio < best - _EPS or (abs(ratio - best) <= _EPS and basis[r] < basis[leave]):
                    best = ratio
                    leave = r
        pivot = tab[leave, enter]
        for j in range(ncols):
            tab[leave, j] /= pivot
        for r in range(q + 1):
            if r != leave:
                f = tab[r, enter]
                if f != 0.0:
                    for j in range(ncols):
                        tab[r, j] -= f * tab[leave, j]
        basis[leave] = enter

    total = tab[q, ncols - 1]
    row = np.zeros(p)
    for r in range(q):
        if basis[r] < p:
            row[basis[r]] = tab[r, ncols - 1]
    col = np.empty(q)
    for r in range(q):
        col[r] = max(tab[q, p + r], 0.0)
    row /= row.sum()
    col /= col.sum()
    return row, col, 1.0 / total - shift


def duality_gap(M, row, col):
    """``max_a row^T M a - min_d d^T M col``, evaluated over pure responses."""
    M = np.asarray(M, dtype=float)
    return float(np.max(row @ M) - np.min(M @ col))


def solve_matrix_game(M):
    """Solve ``min_d max_a d^T M a`` over probability simplices.

    Returns ``(row, col, value)``.  The solution is certified: every pure
    deviation of either player changes the payoff by at most ``GAP_TOL``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.size == 0:
        raise ValueError("payoff matrix must be a nonempty 2-d array")
    if not np.all(np.isfinite(M)):
        raise ValueError("payoff matrix has non-finite entries")
    row, col, value = simplex_game(np.ascontiguousarray(M))
    gap = duality_gap(M, row, col)
    if gap > GAP_TOL * max(1.0, np.abs(M).max()):
        raise ArithmeticError(f"simplex solution failed certification (gap {gap:.3g})")
    return row, col, float(value)


def fictitious_play(M, iterations=20000):
    """Brown's fictitious play; returns ``(row, col, lower, upper)``.

    ``lower <= value <= upper`` always holds, so ``upper - lower`` is a
    certified duality gap even though convergence is slow.
    """
    M = np.asarray(M, dtype=float)
    p, q = M.shape
    row_counts = np.zeros(p)
    col_counts = np.zeros(q)
    row_payoff = np.zeros(p)   # cumulative payoff of each row vs. col history
    col_payoff = np.zeros(q)
    i, j = 0, 0
    for _ in range(iterations):
        row_counts[i] += 1
        col_counts[j] += 1
        row_payoff += M[:, j]
        col_payoff += M[i, :]
        i = int(np.argmin(row_payoff))
        j = int(np.argmax(col_payoff))
    row = row_counts / iterations
    col = col_counts / iterations
    return row, col, float(np.min(M @ col)), float(np.max(row @ M))
