"""Statistical checks of the submartingale-problem properties on ensembles.

For a test function f the process
``S^f(t) = f(Z_t) - f(Z_0) - int_0^t L f(Z_u) du`` must be a submartingale
whenever f has nonnegative oblique derivative on the boundary. The checks
here compare increments of ``S^f`` against their Monte Carlo standard error,
unconditionally and within bins of the starting state.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientPaths
from .generator import Coefficients, TestFunction, apply_generator, check_admissible
from .geometry import PolyhedralDomain, v_table
from .simulate import Ensemble
from .skorokhod import DiscretePath, verify_hull_property

MIN_BIN = 30
DEFAULT_PAIRS = ((0.1, 0.3), (0.25, 0.5), (0.5, 0.75), (0.5, 1.0))


def compute_sf_path(coeffs: Coefficients, f: TestFunction, z_path) -> DiscretePath:
    """``S^f`` on the grid of ``z_path`` with left-endpoint quadrature of ``L f``."""
    if isinstance(z_path, DiscretePath):
        return DiscretePath(z_path.times, _sf(coeffs, f, z_path.values[None], z_path.times)[0])
    raise TypeError("z_path must be a DiscretePath")


def _sf(coeffs, f, z, times):
    """Vectorized ``S^f`` for an array of paths ``z[p, k, :]``."""
    fz = f.value(z)
    lf = apply_generator(coeffs, f, z[:, :-1])
    integral = np.concatenate([np.zeros((z.shape[0], 1)), np.cumsum(lf * np.diff(times), axis=1)], axis=1)
    return fz - fz[:, :1] - integral


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()) if x.size else 0.0, np.inf
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


@dataclass
class PairResult:
    s: float
    t: float
    statistic: float
    std_error: float
    passed: bool
    bins: list = field(default_factory=list)
    decomposition: dict | None = None


@dataclass
class SubmartingaleReport:
    test_fn_id: str
    z_threshold: float
    pairs: list

    @property
    def time_pairs(self):
        return [(p.s, p.t) for p in self.pairs]

    @property
    def verdict(self) -> bool:
        return all(p.passed for p in self.pairs)

    def failing_bins(self) -> list:
        return [(p.s, p.t, b["bin"]) for p in self.pairs for b in p.bins if not b["passed"]]

    def to_dict(self) -> dict:
        return {"test_fn_id": self.test_fn_id, "z_threshold": self.z_threshold, "verdict": self.verdict,
                "pairs": [asdict(p) for p in self.pairs]}


def _passes(mean, se, z):
    return bool(mean >= -z * se) if np.isfinite(se) else True


def test_submartingale(ensemble: Ensemble, coeffs: Coefficients, f: TestFunction, time_pairs,
                       bins: int = 8, z_threshold: float = 3.0, require_admissible: bool = True,
                       linear_v=None) -> SubmartingaleReport:
    """One-sided test that ``E[S^f(t) - S^f(s) | Z(s)] >= 0``.

    Conditioning uses ``bins`` equal-count bins of the distance from ``Z(s)``
    to the boundary; bins with fewer than 30 paths are dropped with an
    InsufficientPaths warning. When ``linear_v`` is given (f = <v, x>), the
    statistic is also split into its martingale part and the push
    ``<v, Y(t) - Y(s)>``.
    """
    if require_admissible:
        check_admissible(ensemble.domain, f)
    S = _sf(coeffs, f, ensemble.z, ensemble.times)
    dist = ensemble.domain.distance_to_boundary(ensemble.z)
    pairs = []
    for s, t in time_pairs:
        i, j = ensemble.time_index(s), ensemble.time_index(t)
        if not i < j:
            raise ValueError(f"time pair ({s}, {t}) must satisfy s < t")
        inc = S[:, j] - S[:, i]
        mean, se = _mean_se(inc)
        ok = _passes(mean, se, z_threshold)
        order = np.argsort(dist[:, i], kind="stable")
        bin_rows = []
        for b, idx in enumerate(np.array_split(order, bins)):
            if idx.size < MIN_BIN:
                warnings.warn(f"bin {b} at s={s} has {idx.size} < {MIN_BIN} paths; dropped",
                              InsufficientPaths, stacklevel=2)
                continue
            bm, bse = _mean_se(inc[idx])
            bp = _passes(bm, bse, z_threshold)
            ok = ok and bp
            bin_rows.append({"bin": b, "n": int(idx.size), "dist_lo": float(dist[idx, i].min()),
                             "dist_hi": float(dist[idx, i].max()), "mean": bm, "std_error": bse, "passed": bp})
        dec = None
        if linear_v is not None:
            v = np.asarray(linear_v, dtype=float)
            x = ensemble.x
            drift = apply_generator(coeffs, f, ensemble.z[:, i:j])
            mart = (x[:, j] - x[:, i]) @ v - (drift * np.diff(ensemble.times[i:j + 1])).sum(axis=1)
            push = (ensemble.y[:, j] - ensemble.y[:, i]) @ v
            mm, mse = _mean_se(mart)
            pm, pse = _mean_se(push)
            dec = {"martingale_mean": mm, "martingale_se": mse, "push_mean": pm, "push_se": pse,
                   "sum_error": float(np.abs(mart + push - inc).max())}
        pairs.append(PairResult(float(s), float(t), mean, se, ok, bin_rows, dec))
    return SubmartingaleReport(f.name, z_threshold, pairs)


test_submartingale.__test__ = False


@dataclass
class OccupationTable:
    epsilons: np.ndarray
    fractions: np.ndarray
    std_errors: np.ndarray
    intercept: float
    intercept_se: float
    atom: float = 0.0

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.epsilons)
        return bool(np.all(np.diff(self.fractions[order]) >= 0))

    @property
    def intercept_consistent_with_zero(self) -> bool:
        return bool(abs(self.intercept) <= 2.0 * self.intercept_se) or (self.intercept == 0.0
                                                                        and self.intercept_se == 0.0)

    def to_dict(self) -> dict:
        return {"epsilons": self.epsilons.tolist(), "fractions": self.fractions.tolist(),
                "std_errors": self.std_errors.tolist(), "intercept": self.intercept,
                "intercept_se": self.intercept_se, "atom": self.atom, "monotone": self.monotone,
                "intercept_consistent_with_zero": self.intercept_consistent_with_zero}


def extrapolation_weights(epsilons, degree: int = 2) -> np.ndarray:
    """Weights ``w`` with ``w @ y`` the least-squares polynomial value at 0."""
    e = np.asarray(epsilons, dtype=float)
    degree = min(degree, e.size - 1)
    V = np.vander(e, degree + 1, increasing=True)
    return np.linalg.pinv(V)[0]


def test_boundary_occupation(ensemble: Ensemble, epsilons, degree: int = 2) -> OccupationTable:
    """Fraction of grid times ``t_1..t_N`` with distance to the boundary below ε.

    The ε -> 0 intercept is a per-path least-squares polynomial (quadratic
    by default) extrapolation; its standard error is taken across paths.
    The fraction of grid points lying on the boundary (within the face
    tolerance) is reported as ``atom``; the projected scheme parks paths
    there for an O(sqrt(dt)) fraction of steps, which biases the intercept
    by the same amount.
    """
    eps = np.asarray(epsilons, dtype=float)
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    z = ensemble.z[:, 1:]
    dom = ensemble.domain
    dist = dom.distance_to_boundary(z)
    on = dist <= dom.face_tolerance * (1.0 + np.linalg.norm(z, axis=-1))
    atom = float(on.mean())
    per_path = np.stack([(dist < e).mean(axis=1) for e in eps], axis=1)
    frac = per_path.mean(axis=0)
    se = per_path.std(axis=0, ddof=1) / np.sqrt(len(ensemble)) if len(ensemble) > 1 else np.zeros(eps.size)
    icpt = per_path @ extrapolation_weights(eps, degree)
    m, s = _mean_se(icpt)
    return OccupationTable(eps, frac, se, m, s if np.isfinite(s) else 0.0, atom)


test_boundary_occupation.__test__ = False


@dataclass
class VerificationReport:
    items: list

    @property
    def passed(self) -> bool:
        return all(it["passed"] for it in self.items)

    def item(self, name: str) -> dict:
        for it in self.items:
            if it["name"] == name:
                return it
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "items": self.items}

    def to_json(self, path=None) -> str:
        text = json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def hull_check(ensemble: Ensemble, n_windows: int = 100, seed: int = 0, use_x: bool = False) -> dict:
    """``verify_hull_property`` on random windows of every path.

    The pair checked is ``(Z, Y)``, or ``(X, Y)`` with ``use_x`` (an
    adversarial pair whose first component is the unconstrained path).
    """
    rng = np.random.default_rng(seed)
    dom = ensemble.domain
    R = ensemble.times.size
    checked = failed = 0
    first_fail = None
    phi_all = ensemble.x if use_x else ensemble.z
    for p in range(len(ensemble)):
        phi = DiscretePath(ensemble.times, phi_all[p])
        eta = DiscretePath(ensemble.times, ensemble.y[p])
        for _ in range(n_windows):
            s, t = sorted(rng.choice(R, size=2, replace=False))
            ok = verify_hull_property(dom, phi, eta, (int(s), int(t)), tol=max(1e-9, 1e-7 * (t - s)))
            checked += 1
            if not ok:
                failed += 1
                if first_fail is None:
                    first_fail = (p, int(s), int(t))
    return {"windows": checked, "failed": failed, "first_failure": first_fail}


def cross_check_formulations(ensemble: Ensemble, domain: PolyhedralDomain, coeffs: Coefficients, battery,
                             time_pairs=None, bins: int = 8,
                             z_threshold: float = 3.0, n_windows: int = 100, hull_paths: int = 20,
                             seed: int = 0) -> VerificationReport:
    """Check that simulated SDE paths satisfy the submartingale-problem properties.

    Items: initial condition, containment, one submartingale test per
    battery member, time spent in V before the stopping time, and the
    pushing-hull property on random windows (skipped for the bridge scheme,
    whose pushes happen between grid points).
    """
    battery = list(battery)
    if not battery:
        raise ValueError("battery must not be empty")
    for f in battery:
        check_admissible(domain, f)
    if time_pairs is None:
        last = ensemble.times.size - 1
        time_pairs = [(ensemble.times[round(a * last)], ensemble.times[round(b * last)])
                      for a, b in DEFAULT_PAIRS]
    items = []
    z0 = np.asarray(ensemble.config.initial_point, dtype=float)
    init_ok = bool(np.array_equal(ensemble.z[:, 0], np.broadcast_to(z0, ensemble.z[:, 0].shape)))
    items.append({"name": "initial_condition", "passed": init_ok})

    slack = domain.slacks(ensemble.z)
    tol = domain.face_tolerance * (1.0 + np.linalg.norm(ensemble.z, axis=-1))
    worst = float((slack + tol[..., None]).min())
    outside = int(np.any(slack < -tol[..., None], axis=-1).sum())
    items.append({"name": "containment", "passed": outside == 0, "points_outside": outside,
                  "worst_slack_margin": worst})

    for f in battery:
        v = getattr(f, "linear_v", None)
        rep = test_submartingale(ensemble, coeffs, f, time_pairs, bins, z_threshold, True, v)
        items.append({"name": f"submartingale:{f.name}", "passed": rep.verdict, "report": rep.to_dict()})

    vt = v_table(domain)
    if vt.any():
        act = np.abs(slack) <= tol[..., None]
        mask = (act[..., :30] * (1 << np.arange(min(domain.n_faces, 30)))).sum(axis=-1)
        in_v = vt[mask] != 0
        k = np.arange(ensemble.times.size) * ensemble.config.record_every
        before = (ensemble.tau[:, None] < 0) | (k[None, :] < ensemble.tau[:, None])
        v_frac = float((in_v & before).sum() / max(1, before.sum()))
    else:
        v_frac = 0.0
    items.append({"name": "v_occupation", "passed": v_frac == 0.0, "fraction": v_frac})

    if ensemble.config.scheme == "bridge":
        items.append({"name": "hull", "passed": True, "skipped": "bridge scheme pushes between grid points"})
    else:
        sub = ensemble if len(ensemble) <= hull_paths else _subset(ensemble, hull_paths)
        h = hull_check(sub, n_windows, seed)
        items.append({"name": "hull", "passed": h["failed"] == 0, **h})
    return VerificationReport(items)


def _subset(ens: Ensemble, n: int) -> Ensemble:
    from dataclasses import replace
    sl = slice(0, n)
    return replace(ens, z=ens.z[sl], y=ens.y[sl], w=ens.w[sl], local_times=ens.local_times[sl],
                   tau=ens.tau[sl], status=ens.status[sl], boundary_steps=ens.boundary_steps[sl])
