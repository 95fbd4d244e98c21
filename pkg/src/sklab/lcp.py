"""Lemke's complementary pivoting for small dense LCPs.

Finds ``z >= 0`` with ``w = q + M z >= 0`` and ``w . z = 0``. Ties in the
ratio test are broken lexicographically on the rows of the basis inverse,
which rules out cycling on degenerate problems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OK = 0
RAY = 1
MAX_ITER = 2

PIVOT_TOL = 1e-12
RATIO_TOL = 1e-12


@dataclass
class LcpResult:
    z: np.ndarray
    w: np.ndarray
    iterations: int
    status: int

    @property
    def ok(self) -> bool:
        return self.status == OK


def lemke(M, q, max_iter: int | None = None) -> LcpResult:
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float).reshape(-1)
    k = q.shape[0]
    if max_iter is None:
        max_iter = 50 * (k + 1)
    if k == 0 or q.min() >= 0.0:
        return LcpResult(np.zeros(k), q.copy(), 0, OK)

    # columns: w (k) | z (k) | z0 | rhs
    z0 = 2 * k
    rhs = 2 * k + 1
    T = np.zeros((k, 2 * k + 2))
    T[:, :k] = np.eye(k)
    T[:, k:2 * k] = -M
    T[:, z0] = -1.0
    T[:, rhs] = q
    basis = list(range(k))

    r = int(np.argmin(q))
    leaving = _pivot(T, basis, r, z0)
    iterations = 1
    status = OK
    while True:
        entering = leaving + k if leaving < k else leaving - k
        r = _ratio_row(T, basis, entering, k)
        if r < 0:
            status = RAY
            break
        leaving = _pivot(T, basis, r, entering)
        iterations += 1
        if leaving == z0:
            break
        if iterations >= max_iter:
            status = MAX_ITER
            break

    z = np.zeros(k)
    for row, var in enumerate(basis):
        if k <= var < 2 * k:
            z[var - k] = T[row, rhs]
    z = np.maximum(z, 0.0)
    return LcpResult(z, q + M @ z, iterations, status)


def _pivot(T, basis, r, col):
    T[r] /= T[r, col]
    for i in range(T.shape[0]):
        if i != r:
            f = T[i, col]
            if f != 0.0:
                T[i] -= f * T[r]
    leaving = basis[r]
    basis[r] = col
    return leaving


def _ratio_row(T, basis, col, k):
    a = T[:, col]
    rows = [i for i in range(T.shape[0]) if a[i] > PIVOT_TOL]
    if not rows:
        return -1
    rhs = T.shape[1] - 1
    ratios = {i: T[i, rhs] / a[i] for i in rows}
    best = min(ratios.values())
    ties = [i for i in rows if ratios[i] <= best + RATIO_TOL * (1.0 + abs(best))]
    z0 = 2 * k
    for i in ties:
        if basis[i] == z0:
            return i
    # lexicographic tie-break on the basis-inverse columns (the w block)
    j = 0
    while len(ties) > 1 and j < k:
        vals = {i: T[i, j] / a[i] for i in ties}
        lo = min(vals.values())
        ties = [i for i in ties if vals[i] <= lo + RATIO_TOL * (1.0 + abs(lo))]
        j += 1
    return ties[0]
