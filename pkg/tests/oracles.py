"""Brute-force reference computations used by the tests.

These are deliberately naive (enumeration, dense grids, explicit loops) and
share no code with the package.
"""
import itertools

import numpy as np


def running_min_reflection(psi):
    """1-D Skorokhod map at 0 by an explicit loop."""
    eta = np.zeros_like(psi)
    level = 0.0
    for k, v in enumerate(psi):
        level = max(level, -v)
        eta[k] = level
    return psi + eta, eta


def simplex_grid(k, n):
    """All points of the k-simplex with coordinates in multiples of 1/n."""
    for c in itertools.product(range(n + 1), repeat=k - 1):
        if sum(c) <= n:
            yield np.array(list(c) + [n - sum(c)], dtype=float) / n


_GRIDS = {}


def simplex_grid_array(k, n):
    """``simplex_grid(k, n)`` as one cached array of shape (points, k)."""
    if (k, n) not in _GRIDS:
        _GRIDS[k, n] = np.array(list(simplex_grid(k, n)))
    return _GRIDS[k, n]


def is_s_matrix_grid(M, n=24):
    """Is there x >= 0 with M x > 0? Dense simplex-grid search."""
    M = np.atleast_2d(M)
    pts = simplex_grid_array(M.shape[1], n)
    return bool(((pts @ M.T).min(axis=1) > 0).any())


def completely_s_grid(R, n=24):
    """Every principal submatrix of R is an S-matrix (grid search).

    ``n`` may be an int or a dict mapping submatrix size to resolution.
    """
    m = R.shape[0]
    for size in range(1, m + 1):
        res = n.get(size, max(n.values())) if isinstance(n, dict) else n
        for S in itertools.combinations(range(m), size):
            if not is_s_matrix_grid(R[np.ix_(S, S)], res):
                return False, S
    return True, None


def uv_simplex_grid(normals, directions, n=200):
    """U/V oracle: some convex combination of normals is positive on all directions?"""
    k = normals.shape[0]
    for s in simplex_grid(k, n):
        nv = s @ normals
        if (directions @ nv).min() > 0:
            return True
    return False


def lcp_enumerate(M, q, tol=1e-12):
    """All solutions of the LCP ``w = q + M z``, by enumerating active sets."""
    m = q.shape[0]
    sols = []
    for size in range(m + 1):
        for A in itertools.combinations(range(m), size):
            z = np.zeros(m)
            if A:
                A = list(A)
                try:
                    z[A] = np.linalg.solve(M[np.ix_(A, A)], -q[A])
                except np.linalg.LinAlgError:
                    continue
            w = q + M @ z
            if z.min() >= -tol and w.min() >= -tol * (1 + np.abs(q).max()):
                sols.append(np.maximum(z, 0))
    return sols


def grid_cone_projection(gens, y, lo=0.0, hi=3.0, n=601):
    """Nearest point of the cone spanned by two generators, by grid search."""
    s = np.linspace(lo, hi, n)
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    pts = s1[..., None] * gens[0] + s2[..., None] * gens[1]
    d = np.linalg.norm(pts - y, axis=-1)
    i = np.unravel_index(np.argmin(d), d.shape)
    return pts[i]


def half_normal_occupation(eps, t):
    """P(|B_t| < eps) for standard Brownian motion."""
    from scipy.stats import norm
    return 2.0 * norm.cdf(eps / np.sqrt(t)) - 1.0
