"""Reflected Euler-Maruyama simulation of the SDE with reflection.

Two step schemes are available:

``projected``
    ``Z_{k+1} = Z_k + b(Z_k) dt + sigma(Z_k) dW_k`` followed by the per-step
    Skorokhod map (LCP). Works for any completely-S polyhedron.
``bridge``
    Freezes the coefficients over the step and applies the Skorokhod map to
    the whole Brownian segment, sampling each face slack's running minimum
    from its Brownian-bridge law. Exact for constant coefficients when the
    reflection matrix ``[<n^i, d^j>]`` is diagonal and the slack noises are
    independent (orthants with normal reflection and diagonal dispersion);
    rejected otherwise.

Paths stopped at the first V-hit (or an unsolvable step) are frozen there.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import LcpRayTermination, NonCompletelyS
from .generator import Coefficients
from .geometry import PolyhedralDomain, active_faces, is_completely_s, v_table
from .lcp import OK
from .rng import bridge_uniforms, brownian_increments
from .skorokhod import DiscretePath, SkorokhodStepper

SCHEMES = ("projected", "bridge")
CHUNK_BUDGET = 4_000_000  # doubles of Gaussian input per chunk
MAX_CHUNK = 256


@dataclass(frozen=True)
class SimConfig:
    step: float
    horizon: float
    paths: int
    seed: int
    initial_point: tuple
    stop_on_v: bool = True
    scheme: str = "projected"
    record_every: int = 1

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.horizon >= self.step:
            raise ValueError("horizon must be at least one step")
        if int(self.paths) < 1:
            raise ValueError("paths must be at least 1")
        if int(self.seed) < 0 or int(self.seed) >= 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        n = round(self.horizon / self.step)
        if abs(n * self.step - self.horizon) > 1e-9 * self.horizon:
            raise ValueError("horizon must be a whole number of steps")
        if int(self.record_every) < 1 or n % int(self.record_every):
            raise ValueError("record_every must divide the number of steps")
        object.__setattr__(self, "paths", int(self.paths))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "record_every", int(self.record_every))
        object.__setattr__(self, "initial_point", tuple(float(v) for v in np.atleast_1d(self.initial_point)))

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.step)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps // self.record_every + 1) * (self.step * self.record_every)

    def to_dict(self) -> dict:
        return {"step": self.step, "horizon": self.horizon, "paths": self.paths, "seed": self.seed,
                "initial_point": list(self.initial_point), "stop_on_v": self.stop_on_v,
                "scheme": self.scheme, "record_every": self.record_every}


@dataclass
class SimOutput:
    index: int
    z_path: DiscretePath
    y_path: DiscretePath
    w_path: DiscretePath
    local_times: np.ndarray
    tau_v: int | None
    boundary_step_count: int
    status: int = OK


@dataclass
class Ensemble:
    """Recorded paths, indexed by path number.

    Arrays have shape ``(paths, records, ...)``. ``tau`` is -1 for paths
    that ran to the horizon, otherwise the step index where the path was
    frozen; ``status`` is nonzero when the freeze came from an unsolvable
    step rather than a V-hit. V detection is approximate at finite step.
    """

    domain: PolyhedralDomain
    coeffs: Coefficients
    config: SimConfig
    times: np.ndarray
    z: np.ndarray
    y: np.ndarray
    w: np.ndarray
    local_times: np.ndarray
    tau: np.ndarray
    status: np.ndarray
    boundary_steps: np.ndarray
    info: dict = field(default_factory=dict)

    def __len__(self):
        return self.z.shape[0]

    def __getitem__(self, p: int) -> SimOutput:
        t = self.times
        tau = int(self.tau[p])
        return SimOutput(p, DiscretePath(t, self.z[p]), DiscretePath(t, self.y[p]), DiscretePath(t, self.w[p]),
                         self.local_times[p], None if tau < 0 else tau, int(self.boundary_steps[p]),
                         int(self.status[p]))

    def __iter__(self):
        return (self[p] for p in range(len(self)))

    @property
    def step(self) -> float:
        return self.config.step * self.config.record_every

    @property
    def x(self) -> np.ndarray:
        """The unconstrained part ``X = Z - Y``."""
        return self.z - self.y

    def time_index(self, t: float) -> int:
        k = int(round(t / self.step))
        if not 0 <= k < self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the recording grid")
        return k


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = os.environ.get("SKLAB_WORKERS", 1)
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def _check_bridge(domain: PolyhedralDomain, coeffs: Coefficients, z0):
    M = domain.reflection
    if np.abs(M - np.diag(np.diag(M))).max() > 1e-12:
        raise ValueError("bridge scheme needs a diagonal reflection matrix <n^i, d^j>")
    N = domain.normals
    aff = coeffs.affine
    off = ~np.eye(domain.n_faces, dtype=bool)
    if aff is not None and aff.kind == 1:
        if np.any(np.abs(N[:, None, :] * N[None, :, :])[off] > 0):
            raise ValueError("bridge scheme needs independent face slack noise")
        return
    if aff is not None:
        pts = [np.zeros(domain.dimension)]
    else:
        rng = np.random.default_rng(0)
        pts = np.asarray(z0) + rng.standard_normal((32, domain.dimension))
    for x in pts:
        S = N @ coeffs.sigma(x)
        C = S @ S.T
        if np.abs(C[off]).max(initial=0.0) > 1e-12 * (1.0 + np.abs(C).max()):
            raise ValueError("bridge scheme needs independent face slack noise")


class _Runner:
    def __init__(self, domain, coeffs, config, backend=None):
        self.domain = domain
        self.coeffs = coeffs
        self.config = config
        J = domain.dimension
        if coeffs.dimension != J:
            raise ValueError("coefficient and domain dimensions differ")
        z0 = np.asarray(config.initial_point, dtype=float)
        if z0.shape != (J,):
            raise ValueError(f"initial point must have {J} coordinates")
        active_faces(domain, z0)
        cs = is_completely_s(domain)
        if not cs and not config.stop_on_v:
            raise NonCompletelyS(f"domain fails completely-S on {cs.witness}; set stop_on_v", witness=cs.witness)
        if config.scheme == "bridge":
            _check_bridge(domain, coeffs, z0)
        self.z0 = z0
        self.stepper = SkorokhodStepper(domain, require_completely_s=False, backend=backend)
        kern = self.stepper.kernels
        self.use_affine = coeffs.affine is not None and kern is not _kernels.fallback
        self.kernels = kern
        self.vtab = v_table(domain) if (config.stop_on_v and not cs) else np.zeros(0, dtype=np.uint8)
        K = config.n_steps
        self.chunk = max(1, min(MAX_CHUNK, CHUNK_BUDGET // max(1, K * max(J, domain.n_faces))))

    def chunks(self, start=0, stop=None):
        stop = self.config.paths if stop is None else stop
        return [(a, min(a + self.chunk, stop)) for a in range(start, stop, self.chunk)]

    def run(self, bounds):
        a, b = bounds
        cfg, dom = self.config, self.domain
        K, J, m = cfg.n_steps, dom.dimension, dom.n_faces
        dW = np.stack([brownian_increments(cfg.seed, p, K, J, cfg.step) for p in range(a, b)])
        bridge = cfg.scheme == "bridge"
        if bridge:
            U = np.stack([bridge_uniforms(cfg.seed, p, K, m) for p in range(a, b)])
        else:
            U = np.zeros((1, 1, 1))
        N, c, D, M, ident, ftol = self.stepper.args
        common = (N, c, D, M, ident, ftol, self.vtab, int(cfg.stop_on_v), int(bridge), cfg.record_every)
        if self.use_affine:
            aff = self.coeffs.affine
            return self.kernels.euler_batch(self.z0, dW, U, cfg.step, aff.b0, aff.B, aff.kind, aff.S0,
                                            aff.alpha, aff.beta, *common)
        return _kernels.fallback.euler_batch(self.z0, dW, U, cfg.step, self.coeffs.b, self.coeffs.sigma, *common)

    def assemble(self, parts, info=None) -> Ensemble:
        cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
        return Ensemble(self.domain, self.coeffs, self.config, self.config.times, cat["z"], cat["y"], cat["w"],
                        cat["local_times"], cat["tau"], cat["status"].astype(np.int64), cat["boundary_steps"],
                        dict(info or {}))

    @property
    def backend_name(self):
        return "compiled" if self.use_affine else "python"


def stream_ensemble(domain, coeffs, config: SimConfig, workers=None, backend=None):
    """Yield the ensemble in path-ordered chunks (each an ``Ensemble``)."""
    runner = _Runner(domain, coeffs, config, backend)
    info = {"backend": runner.backend_name, "scheme": config.scheme}
    workers = resolve_workers(workers)
    chunks = runner.chunks()
    if workers == 1:
        for ch in chunks:
            yield runner.assemble([runner.run(ch)], info)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(runner.run, chunks):
            yield runner.assemble([part], info)


def simulate_ensemble(domain: PolyhedralDomain, coeffs: Coefficients, config: SimConfig,
                      workers=None, backend=None) -> Ensemble:
    """All paths of ``config``; bitwise reproducible for a given seed and backend."""
    parts = list(stream_ensemble(domain, coeffs, config, workers, backend))
    first = parts[0]
    if len(parts) == 1:
        return first
    cat = {k: np.concatenate([getattr(p, k) for p in parts])
           for k in ("z", "y", "w", "local_times", "tau", "status", "boundary_steps")}
    return Ensemble(domain, coeffs, config, first.times, info=first.info, **cat)


def simulate_path(domain: PolyhedralDomain, coeffs: Coefficients, config: SimConfig,
                  path_index: int = 0, backend=None) -> SimOutput:
    """Path ``path_index`` of the ensemble defined by ``config``.

    With ``stop_on_v`` false an unsolvable step raises LcpRayTermination.
    """
    runner = _Runner(domain, coeffs, config, backend)
    ens = runner.assemble([runner.run((path_index, path_index + 1))])
    out = ens[0]
    out.index = path_index
    if out.status != OK and not config.stop_on_v:
        raise LcpRayTermination(f"step {out.tau_v + 1}: LCP failed", step=out.tau_v + 1,
                                state=ens.z[0, min(out.tau_v, ens.z.shape[1] - 1)])
    return out
