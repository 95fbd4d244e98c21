"""Pure-Python/NumPy versions of the compiled kernels.

Step semantics (shared with ``_core.pyx``):

* ``y = x + inc``; if every face slack of ``y`` is nonnegative the step is
  unconstrained.
* With orthonormal faces and normal reflection (``identity``) the LCP
  decouples: ``ell = max(-slack(y), 0)``.
* Otherwise only faces with ``slack(x) <= |inc| + eps`` (or already
  violated) enter a Lemke solve; faces found violated after the push are
  added and the LCP re-solved.

Paths are vectorized across the batch; oblique-reflection LCPs fall back to
a per-path loop.
"""
from __future__ import annotations

import numpy as np

from ..lcp import OK, lemke


def sp_step(x, inc, N, c, D, M, identity, ftol):
    x = np.asarray(x, dtype=float)
    y = x + inc
    q = N @ y - c
    m = c.shape[0]
    ell = np.zeros(m)
    if q.min() >= 0.0:
        return y, ell, 0, OK
    if identity:
        ell = np.where(q < 0.0, -q, 0.0)
        return y + ell @ D, ell, 1, OK
    eps = ftol * (1.0 + np.linalg.norm(x))
    radius = np.linalg.norm(inc) + eps
    sx = N @ x - c
    cand = [i for i in range(m) if sx[i] <= radius or q[i] < 0.0]
    iters = 0
    while True:
        res = lemke(M[np.ix_(cand, cand)], q[cand])
        iters += res.iterations
        if res.status != OK:
            return x.copy(), np.zeros(m), iters, res.status
        ell = np.zeros(m)
        ell[cand] = res.z
        z = y + ell @ D
        s = N @ z - c
        extra = [i for i in range(m) if i not in cand and s[i] < -eps]
        if not extra:
            return z, ell, iters, OK
        cand = sorted(cand + extra)


def lemke_solve(M, q, max_iter=None):
    res = lemke(M, q, max_iter)
    return res.z, res.iterations, res.status


def sp_path(x0, incs, N, c, D, M, identity, ftol):
    incs = np.asarray(incs, dtype=float)
    K, J = incs.shape
    m = c.shape[0]
    Z = np.empty((K + 1, J))
    L = np.zeros((K, m))
    iters = np.zeros(K, dtype=np.intc)
    Z[0] = x0
    status, fail = OK, -1
    for k in range(K):
        z, ell, it, st = sp_step(Z[k], incs[k], N, c, D, M, identity, ftol)
        iters[k] = it
        if st != OK:
            status, fail = st, k + 1
            Z[k + 1:] = Z[k]
            break
        Z[k + 1] = z
        L[k] = ell
    return Z, L, iters, status, fail


def euler_batch(z0, dW, U, h, drift, dispersion, N, c, D, M, identity, ftol, vtab,
                stop_on_v, bridge, record_every):
    """Batch reflected Euler; ``drift(x[n, J]) -> [n, J]``, ``dispersion -> [n, J, J]``."""
    P, K, J = dW.shape
    m = c.shape[0]
    if record_every < 1 or K % record_every:
        raise ValueError("record_every must divide the number of steps")
    R = K // record_every
    out = {
        "z": np.empty((P, R + 1, J)),
        "y": np.zeros((P, R + 1, J)),
        "w": np.zeros((P, R + 1, J)),
        "local_times": np.zeros((P, R + 1, m)),
        "tau": np.full(P, -1, dtype=np.int64),
        "status": np.zeros(P, dtype=np.intc),
        "boundary_steps": np.zeros(P, dtype=np.int64),
    }
    x = np.tile(np.asarray(z0, dtype=float), (P, 1))
    ycum = np.zeros((P, J))
    wcum = np.zeros((P, J))
    lcum = np.zeros((P, m))
    alive = np.ones(P, dtype=bool)
    out["z"][:, 0] = x
    bits = 1 << np.arange(min(m, 30))
    check_v = bool(stop_on_v) and len(vtab) > 0
    diagM = np.diag(M)
    for k in range(K):
        idx = np.flatnonzero(alive)
        if idx.size:
            xa = x[idx]
            sig = dispersion(xa)
            inc = drift(xa) * h + np.einsum("nij,nj->ni", sig, dW[idx, k])
            ell = np.zeros((idx.size, m))
            ok = np.ones(idx.size, dtype=bool)
            if bridge:
                ds = inc @ N.T
                s0 = xa @ N.T - c
                ns = np.einsum("li,nij->nlj", N, sig)
                v = h * (ns * ns).sum(axis=2)
                mn = 0.5 * (ds - np.sqrt(ds * ds - 2.0 * v * np.log(1.0 - U[idx, k])))
                push = -(s0 + mn)
                ell = np.where(push > 0.0, push / diagM, 0.0)
                z = xa + inc + ell @ D
            else:
                y = xa + inc
                q = y @ N.T - c
                need = np.flatnonzero((q < 0.0).any(axis=1))
                z = y.copy()
                if identity:
                    ell[need] = np.where(q[need] < 0.0, -q[need], 0.0)
                    z[need] = y[need] + ell[need] @ D
                else:
                    for n in need:
                        zn, en, _, st = sp_step(xa[n], inc[n], N, c, D, M, identity, ftol)
                        if st != OK:
                            ok[n] = False
                            out["status"][idx[n]] = st
                            out["tau"][idx[n]] = k
                            continue
                        z[n] = zn
                        ell[n] = en
            dead = idx[~ok]
            alive[dead] = False
            g = idx[ok]
            z, ell = z[ok], ell[ok]
            x[g] = z
            wcum[g] += dW[g, k]
            lcum[g] += ell
            ycum[g] += ell @ D
            eps = ftol * (1.0 + np.linalg.norm(z, axis=1))
            act = np.abs(z @ N.T - c) <= eps[:, None]
            out["boundary_steps"][g] += act.any(axis=1)
            if check_v:
                mask = act[:, :bits.size] @ bits
                hit = vtab[mask] != 0
                out["tau"][g[hit]] = k + 1
                alive[g[hit]] = False
        if (k + 1) % record_every == 0:
            r = (k + 1) // record_every
            out["z"][:, r] = x
            out["y"][:, r] = ycum
            out["w"][:, r] = wcum
            out["local_times"][:, r] = lcum
    return out
