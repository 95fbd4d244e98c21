"""Coefficients, the second-order operator L and admissible test functions.

``L f = <b, grad f> + 1/2 tr(a hess f)`` with ``a = sigma sigma^T``. Test
functions carry analytic gradients and Hessians; all evaluators broadcast
over leading axes of ``x`` (shape ``(..., J)``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CenterInV, ObliqueSignViolation, RadiusTooLarge
from .geometry import (
    BoundaryClass,
    PolyhedralDomain,
    active_faces,
    classify_boundary_point,
    is_completely_s,
    stratum_margin,
)

OBLIQUE_TOL = 1e-9
PLATEAU = 0.25  # bump profile is flat for normalized radius below this


@dataclass(frozen=True)
class Affine:
    """Affine coefficient data understood by the compiled kernel.

    Drift ``b0 + B x``; dispersion ``S0`` (kind 0) or ``diag(alpha + beta x)`` (kind 1).
    """

    b0: np.ndarray
    B: np.ndarray
    kind: int
    S0: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


class Coefficients:
    """Drift ``b`` and dispersion ``sigma`` of the reflected SDE."""

    def __init__(self, drift: Callable, dispersion: Callable, dimension: int,
                 ellipticity_floor: float = 0.0, name: str = "custom", affine: Affine | None = None,
                 params: dict | None = None):
        self._drift = drift
        self._dispersion = dispersion
        self.dimension = int(dimension)
        self.ellipticity_floor = float(ellipticity_floor)
        self.name = name
        self.affine = affine
        self.params = params or {}

    def b(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._drift(x), x.shape)

    def sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.dimension
        return np.broadcast_to(self._dispersion(x), x.shape[:-1] + (J, J))

    def a(self, x) -> np.ndarray:
        s = self.sigma(x)
        return s @ np.swapaxes(s, -1, -2)

    def check_ellipticity(self, low, high, n: int = 1000, seed: int = 0) -> float:
        """Spot-check ``v^T a(x) v >= floor |v|^2`` on random points of a box.

        Returns the smallest observed Rayleigh quotient; raises ValueError
        when it falls below the floor.
        """
        rng = np.random.default_rng(seed)
        low = np.broadcast_to(np.asarray(low, dtype=float), (self.dimension,))
        high = np.broadcast_to(np.asarray(high, dtype=float), (self.dimension,))
        x = rng.uniform(low, high, size=(n, self.dimension))
        v = rng.standard_normal((n, self.dimension))
        q = np.einsum("ni,nij,nj->n", v, self.a(x), v) / np.einsum("ni,ni->n", v, v)
        worst = float(q.min())
        if worst < self.ellipticity_floor:
            raise ValueError(f"ellipticity {worst:.3g} below floor {self.ellipticity_floor:.3g}")
        return worst

    def __repr__(self):
        return f"Coefficients({self.name!r}, J={self.dimension})"


def _affine_coefficients(name, b0, B, S0=None, alpha=None, beta=None, floor=0.0, params=None):
    b0 = np.asarray(b0, dtype=float)
    J = b0.shape[0]
    B = np.zeros((J, J)) if B is None else np.asarray(B, dtype=float)
    if B.shape != (J, J):
        raise ValueError("drift matrix must be J x J")
    for arr in (b0, B):
        arr.setflags(write=False)
    if S0 is not None:
        S0 = np.asarray(S0, dtype=float)
        if S0.shape != (J, J):
            raise ValueError("dispersion must be J x J")
        S0.setflags(write=False)
        aff = Affine(b0, B, 0, S0, np.zeros(J), np.zeros(J))
        disp = lambda x: S0  # noqa: E731
    else:
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (J,)).copy()
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (J,)).copy()
        aff = Affine(b0, B, 1, np.zeros((J, J)), alpha, beta)

        def disp(x):
            d = alpha + beta * x
            return d[..., :, None] * np.eye(J)

    return Coefficients(lambda x: b0 + x @ B.T, disp, J, floor, name, aff, params)


def constant_coefficients(drift, dispersion, ellipticity_floor: float = 0.0) -> Coefficients:
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    disp = np.atleast_2d(np.asarray(dispersion, dtype=float))
    return _affine_coefficients("constant", drift, None, S0=disp, floor=ellipticity_floor,
                                params={"drift": drift.tolist(), "dispersion": disp.tolist()})


def ou_coefficients(B, dispersion, mean=None, ellipticity_floor: float = 0.0) -> Coefficients:
    """Linear drift ``-B (x - mean)`` with constant dispersion."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    J = B.shape[0]
    mean = np.zeros(J) if mean is None else np.asarray(mean, dtype=float)
    disp = np.atleast_2d(np.asarray(dispersion, dtype=float))
    return _affine_coefficients("ou", B @ mean, -B, S0=disp, floor=ellipticity_floor,
                                params={"B": B.tolist(), "dispersion": disp.tolist(), "mean": mean.tolist()})


def state_diag_coefficients(drift, alpha, beta, ellipticity_floor: float = 0.0) -> Coefficients:
    """Constant drift with diagonal dispersion ``sigma_jj(x) = alpha_j + beta_j x_j``."""
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    return _affine_coefficients("state-diag", drift, None, alpha=alpha, beta=beta, floor=ellipticity_floor,
                                params={"drift": drift.tolist(), "alpha": np.atleast_1d(alpha).tolist(),
                                        "beta": np.atleast_1d(beta).tolist()})


REGISTRY = {
    "constant": lambda p: constant_coefficients(p["drift"], p["dispersion"], p.get("ellipticity_floor", 0.0)),
    "ou": lambda p: ou_coefficients(p["B"], p["dispersion"], p.get("mean"), p.get("ellipticity_floor", 0.0)),
    "state-diag": lambda p: state_diag_coefficients(p["drift"], p["alpha"], p["beta"],
                                                    p.get("ellipticity_floor", 0.0)),
}


def make_coefficients(name: str, params: dict) -> Coefficients:
    """Build registered coefficients from a config entry."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown coefficients {name!r}; choose from {sorted(REGISTRY)}") from None
    try:
        return factory(params)
    except KeyError as exc:
        raise ValueError(f"coefficients {name!r} missing parameter {exc}") from None


# -- test functions -------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """A C^2 function with analytic first and second derivatives."""

    __test__ = False  # not a pytest class

    value: Callable
    gradient: Callable
    hessian: Callable
    dimension: int
    support_radius: float = np.inf
    constant_near_V: bool = False
    name: str = "f"
    center: np.ndarray | None = field(default=None, compare=False)

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        both_bounded = np.isfinite(self.support_radius) and np.isfinite(other.support_radius)
        return TestFunction(
            lambda x: self.value(x) + other.value(x),
            lambda x: self.gradient(x) + other.gradient(x),
            lambda x: self.hessian(x) + other.hessian(x),
            self.dimension,
            # a sum of bounded bumps with different centres has no single radius
            max(self.support_radius, other.support_radius) if both_bounded and _same_center(self, other) else np.inf,
            self.constant_near_V and other.constant_near_V,
            f"({self.name} + {other.name})",
            self.center if _same_center(self, other) else None,
        )

    def __mul__(self, alpha: float) -> "TestFunction":
        alpha = float(alpha)
        return TestFunction(
            lambda x: alpha * self.value(x),
            lambda x: alpha * self.gradient(x),
            lambda x: alpha * self.hessian(x),
            self.dimension, self.support_radius, self.constant_near_V,
            f"{alpha:g}*{self.name}", self.center,
        )

    __rmul__ = __mul__

    def __neg__(self):
        t = self * -1.0
        return TestFunction(t.value, t.gradient, t.hessian, t.dimension, t.support_radius,
                            t.constant_near_V, f"-{self.name}", self.center)


def _same_center(f, g):
    return f.center is not None and g.center is not None and np.array_equal(f.center, g.center)


def apply_generator(coeffs: Coefficients, f: TestFunction, x) -> np.ndarray:
    """``L f(x)``; broadcasts over leading axes of x."""
    x = np.asarray(x, dtype=float)
    drift = np.einsum("...i,...i->...", coeffs.b(x), f.gradient(x))
    diffusion = 0.5 * np.einsum("...ij,...ij->...", coeffs.a(x), f.hessian(x))
    return drift + diffusion


def make_constant_test_fn(dimension: int, value: float = 1.0) -> TestFunction:
    J = int(dimension)
    return TestFunction(
        lambda x: np.full(np.shape(x)[:-1], float(value)),
        lambda x: np.zeros(np.shape(x)),
        lambda x: np.zeros(np.shape(x)[:-1] + (J, J)),
        J, np.inf, True, f"const({value:g})",
    )


def make_linear_test_fn(domain: PolyhedralDomain, v, check: bool = True) -> TestFunction:
    """``f(x) = <v, x>``; admissible iff ``<v, d^i> >= 0`` on every face."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (domain.dimension,):
        raise ValueError("v must have the domain dimension")
    v.setflags(write=False)
    if check:
        bad = np.flatnonzero(domain.directions @ v < -OBLIQUE_TOL)
        if bad.size:
            raise ObliqueSignViolation(f"<v, d^i> < 0 on faces {bad.tolist()}", faces=bad.tolist())
    J = domain.dimension
    f = TestFunction(
        lambda x: np.asarray(x, dtype=float) @ v,
        lambda x: np.broadcast_to(v, np.shape(x)).copy(),
        lambda x: np.zeros(np.shape(x)[:-1] + (J, J)),
        J, np.inf, False, f"linear({', '.join(f'{t:g}' for t in v)})",
    )
    object.__setattr__(f, "linear_v", v)
    return f


def _profile(u):
    """Quintic smoothstep: 1 on [0, PLATEAU], 0 on [1, inf), C^2 in between.

    Returns the profile and its first two derivatives in u.
    """
    u = np.asarray(u, dtype=float)
    s = np.clip((u - PLATEAU) / (1.0 - PLATEAU), 0.0, 1.0)
    k = 1.0 / (1.0 - PLATEAU)
    h = 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
    dh = -30.0 * s * s * (1.0 - s) ** 2 * k
    d2h = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) * k * k
    return h, dh, d2h


def _bump_from_quadratic(J, y, r, beta, nstar, sign, name, constant_near_V=True):
    """``sign * h(rho / r^2)`` with ``rho = |x - y|^2 + beta <nstar, x - y>``."""
    y = np.array(y, dtype=float)
    nstar = np.array(nstar, dtype=float)
    y.setflags(write=False)
    r2 = r * r
    eye = np.eye(J)

    def parts(x):
        dx = np.asarray(x, dtype=float) - y
        rho = np.einsum("...i,...i->...", dx, dx) + beta * (dx @ nstar)
        g = 2.0 * dx + beta * nstar
        return rho / r2, g

    def value(x):
        u, _ = parts(x)
        return sign * _profile(u)[0]

    def gradient(x):
        u, g = parts(x)
        _, dh, _ = _profile(u)
        return sign * (dh / r2)[..., None] * g

    def hessian(x):
        u, g = parts(x)
        _, dh, d2h = _profile(u)
        outer = g[..., :, None] * g[..., None, :]
        return sign * ((d2h / (r2 * r2))[..., None, None] * outer + (2.0 * dh / r2)[..., None, None] * eye)

    return TestFunction(value, gradient, hessian, J, float(r), constant_near_V, name, y)


def _check_sign(sign):
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")


def make_bump_test_fn(domain: PolyhedralDomain, center, radius: float, sign: int = -1) -> TestFunction:
    """``sign * f`` for a boundary bump ``f`` at a U-point ``center``.

    ``f`` equals 1 near ``center`` (on a ball of radius ``kappa``, stored on
    the returned function as ``kappa``), vanishes outside ``B_r(center)`` in the
    closed domain, and has ``<d^i, grad f> <= 0`` on every face it touches, so
    ``sign=-1`` gives an admissible function.

    The level sets tilt along a normal ``n* = sum s_i n^i`` with
    ``<n*, d^j> >= t* > 0`` for the faces at the centre:
    ``rho(x) = |x - y|^2 + (2 r / t*) <n*, x - y>``.
    """
    _check_sign(sign)
    y = np.asarray(center, dtype=float).reshape(-1)
    r = float(radius)
    if r <= 0:
        raise ValueError("radius must be positive")
    S = active_faces(domain, y)
    if not S:
        raise ValueError("bump centre must lie on the boundary; use make_interior_bump_test_fn")
    if classify_boundary_point(domain, y) is BoundaryClass.IN_V:
        raise CenterInV(f"centre {y.tolist()} lies in V")
    # every sub-stratum of S has y in its closure, so none may be in V
    cs = is_completely_s(domain)
    for W in cs.v_strata:
        if set(W) <= set(S):
            raise CenterInV(f"centre {y.tolist()} is a limit of V stratum {W}")
    others = [i for i in range(domain.n_faces) if i not in S]
    if others:
        gap = float(domain.slacks(y)[others].min())
        if r >= gap:
            raise RadiusTooLarge(f"radius {r} reaches face(s) not incident to the centre (gap {gap:.6g})")
    tstar, nstar = stratum_margin(domain, S)
    beta = 2.0 * r / tstar
    nn = float(np.linalg.norm(nstar))
    # largest kappa with kappa^2 + beta |n*| kappa <= PLATEAU r^2
    kappa = 0.5 * (-beta * nn + np.sqrt((beta * nn) ** 2 + 4.0 * PLATEAU * r * r))
    f = _bump_from_quadratic(domain.dimension, y, r, beta, nstar, sign,
                             f"{'-' if sign < 0 else ''}bump({', '.join(f'{t:g}' for t in y)}; r={r:g})")
    object.__setattr__(f, "kappa", float(kappa))
    return f


def make_interior_bump_test_fn(domain: PolyhedralDomain, center, radius: float, sign: int = 1) -> TestFunction:
    """Radial bump supported strictly inside the domain; both signs are admissible."""
    _check_sign(sign)
    y = np.asarray(center, dtype=float).reshape(-1)
    r = float(radius)
    if r <= 0:
        raise ValueError("radius must be positive")
    gap = float(domain.slacks(y).min())
    if r >= gap:
        raise RadiusTooLarge(f"radius {r} reaches the boundary (distance {gap:.6g})")
    f = _bump_from_quadratic(domain.dimension, y, r, 0.0, np.zeros(domain.dimension), sign,
                             f"{'-' if sign < 0 else ''}ibump({', '.join(f'{t:g}' for t in y)}; r={r:g})")
    object.__setattr__(f, "kappa", float(np.sqrt(PLATEAU) * r))
    return f


def admissibility_violations(domain: PolyhedralDomain, f: TestFunction, n: int = 1000, seed: int = 0,
                             scale: float = 10.0) -> list:
    """Faces on which sampled points give ``<d^i, grad f> < -1e-9``.

    Points are drawn in the support ball of ``f`` (or a ball of radius
    ``scale`` around the domain's interior point for unbounded support),
    projected onto each face plane and kept when they lie in the closed
    domain. When the domain has V points, ``f`` must also be flagged
    constant near V; otherwise the string ``"V"`` is reported.
    """
    rng = np.random.default_rng(seed)
    J = domain.dimension
    if np.isfinite(f.support_radius) and f.center is not None:
        c0, rad = np.asarray(f.center, dtype=float), f.support_radius
    else:
        c0, rad = domain.interior_point, scale
    bad = []
    for i in range(domain.n_faces):
        n_i, c_i, d_i = domain.normals[i], domain.offsets[i], domain.directions[i]
        g = rng.standard_normal((n, J))
        g *= (rad * rng.uniform(size=(n, 1)) ** (1.0 / J)) / np.linalg.norm(g, axis=1, keepdims=True)
        x = c0 + g
        x = x - (x @ n_i - c_i)[:, None] * n_i
        # include the nearest face point to the centre itself
        x = np.vstack([c0 - (c0 @ n_i - c_i) * n_i, x])
        s = domain.slacks(x)
        keep = np.all(s >= -domain.face_tolerance * (1 + np.linalg.norm(x, axis=1))[:, None], axis=1)
        if not keep.any():
            continue
        dd = f.gradient(x[keep]) @ d_i
        if dd.min() < -OBLIQUE_TOL:
            bad.append(i)
    if not f.constant_near_V and not is_completely_s(domain):
        bad.append("V")
    return bad


def check_admissible(domain: PolyhedralDomain, f: TestFunction, **kw) -> None:
    bad = admissibility_violations(domain, f, **kw)
    if bad:
        raise ObliqueSignViolation(f"{f.name} is not admissible: violations on {bad}", faces=bad)
