# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: per-step Skorokhod solve and batched reflected Euler.

Mirrors ``_fallback.py`` step for step; see that module for the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, log
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF OK = 0
DEF RAY = 1
DEF MAXIT = 2

cdef double PIVOT_TOL = 1e-12
cdef double RATIO_TOL = 1e-12


cdef struct Faces:
    int m
    int J
    const double* N
    const double* c
    const double* D
    const double* M
    int identity
    double ftol


cdef struct Work:
    double* T
    int* basis
    int* cand
    int* ties
    double* Mc
    double* qc
    double* zc
    double* q
    double* sx
    double* y


cdef int work_alloc(Work* w, int m, int J) nogil:
    w.T = <double*> malloc(m * (2 * m + 2) * sizeof(double))
    w.basis = <int*> malloc(m * sizeof(int))
    w.cand = <int*> malloc(m * sizeof(int))
    w.ties = <int*> malloc(m * sizeof(int))
    w.Mc = <double*> malloc(m * m * sizeof(double))
    w.qc = <double*> malloc(m * sizeof(double))
    w.zc = <double*> malloc(m * sizeof(double))
    w.q = <double*> malloc(m * sizeof(double))
    w.sx = <double*> malloc(m * sizeof(double))
    w.y = <double*> malloc(J * sizeof(double))
    if (w.T == NULL or w.basis == NULL or w.cand == NULL or w.ties == NULL or w.Mc == NULL
            or w.qc == NULL or w.zc == NULL or w.q == NULL or w.sx == NULL or w.y == NULL):
        return -1
    return 0


cdef void work_free(Work* w) nogil:
    free(w.T); free(w.basis); free(w.cand); free(w.ties); free(w.Mc)
    free(w.qc); free(w.zc); free(w.q); free(w.sx); free(w.y)


cdef int lk_pivot(double* T, int k, int ncol, int* basis, int r, int col) nogil:
    cdef int i, j, leaving
    cdef double piv = T[r * ncol + col], f
    for j in range(ncol):
        T[r * ncol + j] /= piv
    for i in range(k):
        if i != r:
            f = T[i * ncol + col]
            if f != 0.0:
                for j in range(ncol):
                    T[i * ncol + j] -= f * T[r * ncol + j]
    leaving = basis[r]
    basis[r] = col
    return leaving


cdef int lk_ratio_row(double* T, int k, int ncol, int* basis, int col, int* ties) nogil:
    cdef int i, j, n = 0, nt, found = 0, rhs = ncol - 1, z0 = 2 * k
    cdef double a, best = 0.0, ratio, lo, v
    for i in range(k):
        a = T[i * ncol + col]
        if a > PIVOT_TOL:
            ratio = T[i * ncol + rhs] / a
            if found == 0 or ratio < best:
                best = ratio
            found = 1
    if found == 0:
        return -1
    for i in range(k):
        a = T[i * ncol + col]
        if a > PIVOT_TOL:
            ratio = T[i * ncol + rhs] / a
            if ratio <= best + RATIO_TOL * (1.0 + fabs(best)):
                ties[n] = i
                n += 1
    for i in range(n):
        if basis[ties[i]] == z0:
            return ties[i]
    j = 0
    while n > 1 and j < k:
        lo = T[ties[0] * ncol + j] / T[ties[0] * ncol + col]
        for i in range(1, n):
            v = T[ties[i] * ncol + j] / T[ties[i] * ncol + col]
            if v < lo:
                lo = v
        nt = 0
        for i in range(n):
            v = T[ties[i] * ncol + j] / T[ties[i] * ncol + col]
            if v <= lo + RATIO_TOL * (1.0 + fabs(lo)):
                ties[nt] = ties[i]
                nt += 1
        n = nt
        j += 1
    return ties[0]


cdef int lemke_c(int k, const double* M, const double* q, double* z, double* T, int* basis, int* ties,
                 int max_iter, int* iters) nogil:
    cdef int i, j, r, leaving, entering, it, status = OK
    cdef int ncol = 2 * k + 2, z0 = 2 * k, rhs = 2 * k + 1
    cdef double qmin = q[0]
    r = 0
    for i in range(1, k):
        if q[i] < qmin:
            qmin = q[i]
            r = i
    for i in range(k):
        z[i] = 0.0
    if qmin >= 0.0:
        iters[0] = 0
        return OK
    for i in range(k):
        for j in range(ncol):
            T[i * ncol + j] = 0.0
        T[i * ncol + i] = 1.0
        for j in range(k):
            T[i * ncol + k + j] = -M[i * k + j]
        T[i * ncol + z0] = -1.0
        T[i * ncol + rhs] = q[i]
        basis[i] = i
    leaving = lk_pivot(T, k, ncol, basis, r, z0)
    it = 1
    while True:
        if leaving < k:
            entering = leaving + k
        else:
            entering = leaving - k
        r = lk_ratio_row(T, k, ncol, basis, entering, ties)
        if r < 0:
            status = RAY
            break
        leaving = lk_pivot(T, k, ncol, basis, r, entering)
        it += 1
        if leaving == z0:
            break
        if it >= max_iter:
            status = MAXIT
            break
    for i in range(k):
        if basis[i] >= k and basis[i] < 2 * k:
            z[basis[i] - k] = T[i * ncol + rhs]
    for i in range(k):
        if z[i] < 0.0:
            z[i] = 0.0
    iters[0] = it
    return status


cdef int sp_step_c(Faces* F, Work* W, const double* x, const double* inc,
                   double* z, double* ell, int* iters) nogil:
    cdef int i, j, a, b, m = F.m, J = F.J, k, status, it, added
    cdef double qmin, s, nx = 0.0, ninc = 0.0, eps, radius
    iters[0] = 0
    for j in range(J):
        W.y[j] = x[j] + inc[j]
        nx += x[j] * x[j]
        ninc += inc[j] * inc[j]
    qmin = 0.0
    for i in range(m):
        s = 0.0
        for j in range(J):
            s += F.N[i * J + j] * W.y[j]
        W.q[i] = s - F.c[i]
        if i == 0 or W.q[i] < qmin:
            qmin = W.q[i]
        ell[i] = 0.0
    if qmin >= 0.0:
        for j in range(J):
            z[j] = W.y[j]
        return OK
    if F.identity:
        for i in range(m):
            ell[i] = -W.q[i] if W.q[i] < 0.0 else 0.0
        for j in range(J):
            z[j] = W.y[j]
        for i in range(m):
            if ell[i] != 0.0:
                for j in range(J):
                    z[j] += ell[i] * F.D[i * J + j]
        iters[0] = 1
        return OK
    eps = F.ftol * (1.0 + sqrt(nx))
    radius = sqrt(ninc) + eps
    k = 0
    for i in range(m):
        s = 0.0
        for j in range(J):
            s += F.N[i * J + j] * x[j]
        W.sx[i] = s - F.c[i]
        if W.sx[i] <= radius or W.q[i] < 0.0:
            W.cand[k] = i
            k += 1
    while True:
        for a in range(k):
            W.qc[a] = W.q[W.cand[a]]
            for b in range(k):
                W.Mc[a * k + b] = F.M[W.cand[a] * m + W.cand[b]]
        status = lemke_c(k, W.Mc, W.qc, W.zc, W.T, W.basis, W.ties, 50 * (k + 1), &it)
        iters[0] += it
        if status != OK:
            for j in range(J):
                z[j] = x[j]
            for i in range(m):
                ell[i] = 0.0
            return status
        for i in range(m):
            ell[i] = 0.0
        for a in range(k):
            ell[W.cand[a]] = W.zc[a]
        for j in range(J):
            z[j] = W.y[j]
        for i in range(m):
            if ell[i] != 0.0:
                for j in range(J):
                    z[j] += ell[i] * F.D[i * J + j]
        added = 0
        for i in range(m):
            s = 0.0
            for j in range(J):
                s += F.N[i * J + j] * z[j]
            s -= F.c[i]
            if s < -eps:
                b = 0
                for a in range(k):
                    if W.cand[a] == i:
                        b = 1
                if b == 0:
                    added = 1
                    W.cand[k] = i
                    k += 1
        if added == 0:
            return OK
        # keep candidates sorted so the LCP is assembled in face order
        for a in range(1, k):
            b = a
            while b > 0 and W.cand[b - 1] > W.cand[b]:
                i = W.cand[b]
                W.cand[b] = W.cand[b - 1]
                W.cand[b - 1] = i
                b -= 1


cdef void faces_init(Faces* F, const double[:, ::1] N, const double[::1] c, const double[:, ::1] D,
                     const double[:, ::1] M, int identity, double ftol):
    F.m = N.shape[0]
    F.J = N.shape[1]
    F.N = &N[0, 0]
    F.c = &c[0]
    F.D = &D[0, 0]
    F.M = &M[0, 0]
    F.identity = identity
    F.ftol = ftol


def lemke_solve(M, q, max_iter=None):
    """Compiled Lemke solve; returns ``(z, iterations, status)``."""
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef int k = qv.shape[0]
    cdef int it = 0, status
    z = np.zeros(k)
    if k == 0:
        return z, 0, OK
    cdef double[::1] zv = z
    T = np.zeros(k * (2 * k + 2))
    cdef double[::1] Tv = T
    cdef int[::1] basis = np.zeros(k, dtype=np.intc)
    cdef int[::1] ties = np.zeros(k, dtype=np.intc)
    cdef int mi = 50 * (k + 1) if max_iter is None else int(max_iter)
    status = lemke_c(k, &Mv[0, 0], &qv[0], &zv[0], &Tv[0], &basis[0], &ties[0], mi, &it)
    return z, it, status


def sp_step(x, inc, N, c, D, M, int identity, double ftol):
    cdef const double[:, ::1] Nv = np.ascontiguousarray(N, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] iv = np.ascontiguousarray(inc, dtype=np.float64)
    cdef Faces F
    cdef Work W
    cdef int it = 0, status
    faces_init(&F, Nv, cv, Dv, Mv, identity, ftol)
    z = np.empty(F.J)
    ell = np.empty(F.m)
    cdef double[::1] zv = z
    cdef double[::1] lv = ell
    if work_alloc(&W, F.m, F.J) != 0:
        work_free(&W)
        raise MemoryError()
    status = sp_step_c(&F, &W, &xv[0], &iv[0], &zv[0], &lv[0], &it)
    work_free(&W)
    return z, ell, it, status


def sp_path(x0, incs, N, c, D, M, int identity, double ftol):
    """Chain step solves along given increments.

    Returns ``(Z[K+1, J], L[K, m], iters[K], status, fail_step)``; on failure
    the rows from ``fail_step`` on are left at the last constrained value.
    """
    cdef const double[:, ::1] Nv = np.ascontiguousarray(N, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[:, ::1] Iv = np.ascontiguousarray(incs, dtype=np.float64)
    cdef Faces F
    cdef Work W
    faces_init(&F, Nv, cv, Dv, Mv, identity, ftol)
    cdef int K = Iv.shape[0], J = F.J, m = F.m, k, j, status = OK, fail = -1, it
    Z = np.empty((K + 1, J))
    L = np.zeros((K, m))
    iters = np.zeros(K, dtype=np.intc)
    cdef double[:, ::1] Zv = Z
    cdef double[:, ::1] Lv = L
    cdef int[::1] itv = iters
    x0a = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[::1] x0v = x0a
    for j in range(J):
        Zv[0, j] = x0v[j]
    if work_alloc(&W, m, J) != 0:
        work_free(&W)
        raise MemoryError()
    with nogil:
        for k in range(K):
            status = sp_step_c(&F, &W, &Zv[k, 0], &Iv[k, 0], &Zv[k + 1, 0], &Lv[k, 0], &it)
            itv[k] = it
            if status != OK:
                fail = k + 1
                break
        if fail > 0:
            for k in range(fail, K + 1):
                for j in range(J):
                    Zv[k, j] = Zv[fail - 1, j]
    work_free(&W)
    return Z, L, iters, status, fail


def euler_batch(z0, dW, U, double h, b0, B, int skind, S0, alpha, beta,
                N, c, D, M, int identity, double ftol, vtab, int stop_on_v,
                int bridge, int record_every):
    """Reflected Euler for a batch of paths with affine drift.

    Drift ``b(x) = b0 + B x``. Dispersion: ``skind == 0`` constant ``S0``;
    ``skind == 1`` diagonal ``alpha + beta * x``. ``dW[p, k]`` holds the
    Brownian increments (already scaled by sqrt(h)); ``U[p, k]`` holds
    uniforms for the bridge minimum (ignored unless ``bridge``).
    """
    cdef const double[:, ::1] Nv = np.ascontiguousarray(N, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[:, :, ::1] dWv = np.ascontiguousarray(dW, dtype=np.float64)
    cdef const double[:, :, ::1] Uv
    cdef const double[::1] b0v = np.ascontiguousarray(b0, dtype=np.float64)
    cdef const double[:, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] S0v = np.ascontiguousarray(S0, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const double[::1] z0v = np.ascontiguousarray(z0, dtype=np.float64)
    vt = np.ascontiguousarray(vtab, dtype=np.uint8)
    cdef const cnp.uint8_t[::1] vtv = vt
    cdef int nvt = vt.shape[0]
    cdef Faces F
    cdef Work W
    faces_init(&F, Nv, cv, Dv, Mv, identity, ftol)
    cdef int P = dWv.shape[0], K = dWv.shape[1], J = F.J, m = F.m
    if bridge:
        Uv = np.ascontiguousarray(U, dtype=np.float64)
    else:
        Uv = np.zeros((1, 1, 1))
    if record_every < 1 or K % record_every != 0:
        raise ValueError("record_every must divide the number of steps")
    cdef int R = K // record_every
    Zo = np.empty((P, R + 1, J))
    Yo = np.zeros((P, R + 1, J))
    Wo = np.zeros((P, R + 1, J))
    Lo = np.zeros((P, R + 1, m))
    tau = np.full(P, -1, dtype=np.int64)
    status = np.zeros(P, dtype=np.intc)
    bsteps = np.zeros(P, dtype=np.int64)
    cdef double[:, :, ::1] Zv = Zo
    cdef double[:, :, ::1] Yv = Yo
    cdef double[:, :, ::1] Wv = Wo
    cdef double[:, :, ::1] Lv = Lo
    cdef long long[::1] tauv = tau
    cdef int[::1] stv = status
    cdef long long[::1] bsv = bsteps
    x_a = np.empty(J); inc_a = np.empty(J); z_a = np.empty(J); sig_a = np.empty((J, J))
    ell_a = np.empty(m); ycum_a = np.empty(J); wcum_a = np.empty(J); lcum_a = np.empty(m)
    cdef double[::1] x = x_a, inc = inc_a, z = z_a, ell = ell_a
    cdef double[::1] ycum = ycum_a, wcum = wcum_a, lcum = lcum_a
    cdef double[:, ::1] sig = sig_a
    cdef int p, k, i, j, l, r, st, it, mask, active, alive
    cdef double s, ds, v, mn, nz, eps, tmp
    if work_alloc(&W, m, J) != 0:
        work_free(&W)
        raise MemoryError()
    with nogil:
        for p in range(P):
            for j in range(J):
                x[j] = z0v[j]
                ycum[j] = 0.0
                wcum[j] = 0.0
                Zv[p, 0, j] = x[j]
            for i in range(m):
                lcum[i] = 0.0
            alive = 1
            r = 0
            for k in range(K):
                if alive:
                    # coefficients at the pre-step point
                    for i in range(J):
                        s = b0v[i]
                        for j in range(J):
                            s += Bv[i, j] * x[j]
                        inc[i] = s * h
                    if skind == 0:
                        for i in range(J):
                            for j in range(J):
                                sig[i, j] = S0v[i, j]
                    else:
                        for i in range(J):
                            for j in range(J):
                                sig[i, j] = 0.0
                            sig[i, i] = av[i] + bv[i] * x[i]
                    for i in range(J):
                        s = 0.0
                        for j in range(J):
                            s += sig[i, j] * dWv[p, k, j]
                        inc[i] += s
                    if bridge:
                        for j in range(J):
                            z[j] = x[j] + inc[j]
                        for l in range(m):
                            ds = 0.0
                            s = 0.0
                            for j in range(J):
                                ds += Nv[l, j] * inc[j]
                                s += Nv[l, j] * x[j]
                            s -= cv[l]
                            v = 0.0
                            for j in range(J):
                                tmp = 0.0
                                for i in range(J):
                                    tmp += Nv[l, i] * sig[i, j]
                                v += tmp * tmp
                            v *= h
                            mn = 0.5 * (ds - sqrt(ds * ds - 2.0 * v * log(1.0 - Uv[p, k, l])))
                            tmp = -(s + mn)
                            ell[l] = tmp / Mv[l, l] if tmp > 0.0 else 0.0
                        for l in range(m):
                            if ell[l] != 0.0:
                                for j in range(J):
                                    z[j] += ell[l] * Dv[l, j]
                        st = OK
                    else:
                        st = sp_step_c(&F, &W, &x[0], &inc[0], &z[0], &ell[0], &it)
                    if st != OK:
                        stv[p] = st
                        tauv[p] = k
                        alive = 0
                    else:
                        for j in range(J):
                            x[j] = z[j]
                            wcum[j] += dWv[p, k, j]
                        for l in range(m):
                            if ell[l] != 0.0:
                                lcum[l] += ell[l]
                                for j in range(J):
                                    ycum[j] += ell[l] * Dv[l, j]
                        nz = 0.0
                        for j in range(J):
                            nz += x[j] * x[j]
                        eps = ftol * (1.0 + sqrt(nz))
                        mask = 0
                        active = 0
                        for l in range(m):
                            s = 0.0
                            for j in range(J):
                                s += Nv[l, j] * x[j]
                            if fabs(s - cv[l]) <= eps:
                                active = 1
                                if l < 30:
                                    mask |= (1 << l)
                        if active:
                            bsv[p] += 1
                        if stop_on_v and nvt > 0 and mask < nvt and vtv[mask]:
                            tauv[p] = k + 1
                            alive = 0
                if (k + 1) % record_every == 0:
                    r = (k + 1) // record_every
                    for j in range(J):
                        Zv[p, r, j] = x[j]
                        Yv[p, r, j] = ycum[j]
                        Wv[p, r, j] = wcum[j]
                    for l in range(m):
                        Lv[p, r, l] = lcum[l]
    work_free(&W)
    return {"z": Zo, "y": Yo, "w": Wo, "local_times": Lo, "tau": tau,
            "status": status, "boundary_steps": bsteps}
