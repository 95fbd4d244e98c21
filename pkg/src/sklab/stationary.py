"""Long-run (ergodic) estimates of the stationary law and its characterization.

A stationary law pi of the reflected diffusion puts no mass on the boundary
and satisfies ``int L f dpi <= 0`` for every admissible f. Samples are
dependent, so standard errors use batch means.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonCompletelyS, NonStationaryWarning
from .generator import Coefficients, apply_generator, check_admissible
from .geometry import PolyhedralDomain, is_completely_s
from .simulate import SimConfig, simulate_ensemble
from .skorokhod import write_csv
from .verify import extrapolation_weights

N_BATCHES = 32
MIN_SAMPLES = 1000
DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.025)


def batch_means_se(series: np.ndarray, n_batches: int = N_BATCHES) -> float:
    """Batch-means standard error of the grand mean of ``series[path, time]``.

    Each path is cut into ``n_batches`` contiguous batches; the batch means
    of all paths are treated as independent.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[None]
    P, n = series.shape
    nb = max(1, min(n_batches, n))
    usable = (n // nb) * nb
    means = series[:, :usable].reshape(P, nb, -1).mean(axis=2).ravel()
    if means.size < 2:
        return np.inf
    return float(means.std(ddof=1) / np.sqrt(means.size))


@dataclass
class StationaryEstimate:
    domain: PolyhedralDomain
    samples: np.ndarray  # (paths, records, J), after burn-in
    burn_in: float
    thin: int
    step: float
    info: dict = field(default_factory=dict)

    @property
    def sample_points(self) -> np.ndarray:
        return self.samples.reshape(-1, self.samples.shape[-1])

    @property
    def mean(self) -> np.ndarray:
        return self.sample_points.mean(axis=0)

    @property
    def variance(self) -> np.ndarray:
        return self.sample_points.var(axis=0)

    @property
    def moments(self) -> dict:
        return {"mean": self.mean.tolist(), "variance": self.variance.tolist(),
                "mean_se": [batch_means_se(self.samples[..., j]) for j in range(self.samples.shape[-1])]}

    def boundary_mass_at(self, eps: float) -> float:
        return float((self.domain.distance_to_boundary(self.sample_points) < eps).mean())

    def boundary_mass_table(self, epsilons=DEFAULT_EPSILONS, degree: int = 2) -> dict:
        """Shell masses with a least-squares polynomial extrapolation to ε = 0."""
        eps = np.asarray(epsilons, dtype=float)
        dist = self.domain.distance_to_boundary(self.samples)
        ind = np.stack([(dist < e).astype(float) for e in eps])  # (n_eps, P, R)
        w = extrapolation_weights(eps, degree)
        icpt_series = np.tensordot(w, ind, axes=1)
        icpt = float(icpt_series.mean())
        se = batch_means_se(icpt_series)
        return {"epsilons": eps.tolist(), "mass": ind.mean(axis=(1, 2)).tolist(),
                "mass_se": [batch_means_se(x) for x in ind], "degree": degree,
                "intercept": icpt, "intercept_se": se,
                "consistent_with_zero": bool(abs(icpt) <= 2.0 * se) or icpt == 0.0}

    def histogram_csv(self, path, bins: int = 50) -> None:
        """Per-coordinate marginal histograms: ``coord,lo,hi,density``."""
        pts = self.sample_points
        with open(path, "w") as fh:
            fh.write("coord,lo,hi,density\n")
            for j in range(pts.shape[1]):
                dens, edges = np.histogram(pts[:, j], bins=bins, density=True)
                for lo, hi, d in zip(edges[:-1], edges[1:], dens):
                    fh.write(f"{j + 1},{lo:.17g},{hi:.17g},{d:.17g}\n")

    def to_csv(self, path) -> None:
        t = self.burn_in + np.arange(self.samples.shape[1]) * self.step * self.thin
        write_csv(path, t, self.samples.mean(axis=0), prefix="mean_z")


def estimate_stationary(domain: PolyhedralDomain, coeffs: Coefficients, config: SimConfig,
                        burn_in: float, thin: int = 100, workers=None, backend=None,
                        min_samples: int = MIN_SAMPLES) -> StationaryEstimate:
    """Thinned long-run states after ``burn_in``, pooled over the paths of ``config``.

    Warns with NonStationaryWarning when the first- and second-half means of
    the post-burn-in samples differ by more than 5 standard errors.
    """
    if not is_completely_s(domain):
        raise NonCompletelyS("stationary estimation needs a completely-S domain")
    if not 0 <= burn_in < config.horizon / 2:
        raise ValueError("burn_in must lie in [0, horizon/2)")
    thin = int(thin)
    if config.record_every != thin:
        from dataclasses import replace
        config = replace(config, record_every=thin)
    ens = simulate_ensemble(domain, coeffs, config, workers=workers, backend=backend)
    dt = config.step * thin
    k0 = int(np.ceil(burn_in / dt - 1e-9))
    samples = ens.z[:, k0 + 1:] if k0 + 1 < ens.z.shape[1] else ens.z[:, -1:]
    if samples.shape[0] * samples.shape[1] < min_samples:
        raise ValueError(f"only {samples.shape[0] * samples.shape[1]} samples after thinning; need {min_samples}")
    est = StationaryEstimate(domain, samples, k0 * dt, thin, config.step,
                             {"paths": len(ens), "stopped_paths": int((ens.tau >= 0).sum()), **ens.info})
    half = samples.shape[1] // 2
    if half >= 2:
        a, b = samples[:, :half], samples[:, half:2 * half]
        for j in range(samples.shape[-1]):
            for g in (lambda x: x, lambda x: x * x):
                ga, gb = g(a[..., j]), g(b[..., j])
                diff = abs(ga.mean() - gb.mean())
                se = np.hypot(batch_means_se(ga), batch_means_se(gb))
                if diff > 0 and diff > 5 * se:
                    warnings.warn(f"coordinate {j + 1}: half-run moments differ by {diff:.3g} (> 5 SE = {5 * se:.3g})",
                                  NonStationaryWarning, stacklevel=2)
    return est


def check_stationary_characterization(estimate: StationaryEstimate, coeffs: Coefficients, battery,
                                      epsilons=DEFAULT_EPSILONS, z_threshold: float = 3.0,
                                      require_admissible: bool = True, degree: int = 2) -> dict:
    """``int L f dpi <= z_threshold * SE`` for each f, plus boundary-mass extrapolation."""
    rows = []
    for f in battery:
        if require_admissible:
            check_admissible(estimate.domain, f)
        lf = apply_generator(coeffs, f, estimate.samples)
        m, se = float(lf.mean()), batch_means_se(lf)
        ok = bool(m <= z_threshold * se) or m <= 0.0
        rows.append({"test_fn_id": f.name, "integral": m, "std_error": se, "passed": ok})
    bm = estimate.boundary_mass_table(epsilons, degree)
    return {"functions": rows, "boundary_mass": bm,
            "passed": all(r["passed"] for r in rows) and bm["consistent_with_zero"]}
