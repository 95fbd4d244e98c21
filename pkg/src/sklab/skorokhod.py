"""Pathwise Skorokhod problem on a time grid.

The constrained path is ``phi = psi + eta``; every increment of ``eta`` is a
nonnegative combination of reflection directions of faces active at the
post-step point. Each step is a small LCP in face-slack coordinates with
matrix ``[<n^i, d^j>]``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import BadInitialPoint, GridMismatch, LcpRayTermination, NonCompletelyS
from .geometry import (
    ConeDescription,
    PolyhedralDomain,
    active_faces,
    cone_membership,
    is_completely_s,
)
from .lcp import OK

COMP_TOL = 1e-10


@dataclass(frozen=True)
class DiscretePath:
    """Values of a J-dimensional path on a strictly increasing time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.shape[0] != t.shape[0]:
            raise ValueError(f"{t.shape[0]} times but {v.shape[0]} values")
        if t.size == 0:
            raise ValueError("empty path")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.times.shape[0]

    def same_grid(self, other: "DiscretePath") -> bool:
        return self.times.shape == other.times.shape and np.array_equal(self.times, other.times)

    def to_csv(self, path, prefix: str = "x") -> None:
        write_csv(path, self.times, self.values, prefix)

    @classmethod
    def from_csv(cls, path) -> "DiscretePath":
        t, v, _ = read_csv(path)
        return cls(t, v)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, times, values, prefix="x") -> None:
    values = np.asarray(values).reshape(len(times), -1)
    header = ["t"] + [f"{prefix}{i + 1}" for i in range(values.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in zip(times, values):
            w.writerow([_fmt(t)] + [_fmt(x) for x in row])


def read_csv(path):
    """Read a ``t,x1,...`` CSV; returns ``(times, values, header)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise ValueError(f"{path}: expected a header starting with 't'")
    header = [h.strip() for h in rows[0]]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            data.append([float(x) for x in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not data:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(data)
    return arr[:, 0], arr[:, 1:], header


@dataclass
class EspSolution:
    """Constrained path, pushing path and per-step, per-face local-time increments.

    ``local_time_increments[k - 1, i]`` is the push along ``d^i`` in step k.
    """

    constrained: DiscretePath
    pushing: DiscretePath
    local_time_increments: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def cumulative_local_times(self) -> np.ndarray:
        L = self.local_time_increments
        return np.vstack([np.zeros((1, L.shape[1])), np.cumsum(L, axis=0)])

    def write(self, outdir) -> dict:
        """Write phi/eta/local_times CSVs and a diagnostics JSON sidecar."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        t = self.constrained.times
        self.constrained.to_csv(out / "phi.csv")
        self.pushing.to_csv(out / "eta.csv")
        write_csv(out / "local_times.csv", t, self.cumulative_local_times, prefix="l")
        diag = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.diagnostics.items()}
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
        return {"phi": "phi.csv", "eta": "eta.csv", "local_times": "local_times.csv",
                "diagnostics": "diagnostics.json"}


def solve_sp_1d(psi: DiscretePath) -> EspSolution:
    """Closed-form Skorokhod map on ``[0, inf)`` with unit push at 0."""
    if psi.dimension != 1:
        raise ValueError("solve_sp_1d needs a scalar path")
    v = psi.values[:, 0]
    if v[0] < 0:
        raise BadInitialPoint(f"psi(0) = {v[0]} < 0")
    eta = np.maximum(0.0, np.maximum.accumulate(-v))
    phi = v + eta
    return EspSolution(
        DiscretePath(psi.times, phi),
        DiscretePath(psi.times, eta),
        np.diff(eta).reshape(-1, 1),
        {"method": "running-minimum"},
    )


class SkorokhodStepper:
    """Per-domain step solver with the face arrays packed for the kernels."""

    def __init__(self, domain: PolyhedralDomain, require_completely_s: bool = True, backend=None):
        self.domain = domain
        self.kernels = _kernels.get_backend(backend)
        if require_completely_s:
            cs = is_completely_s(domain)
            if not cs:
                raise NonCompletelyS(f"domain fails completely-S on stratum {cs.witness}", witness=cs.witness)
        self.identity = int(np.allclose(domain.reflection, np.eye(domain.n_faces), rtol=0.0, atol=1e-14))
        self.args = (
            np.ascontiguousarray(domain.normals),
            np.ascontiguousarray(domain.offsets),
            np.ascontiguousarray(domain.directions),
            np.ascontiguousarray(domain.reflection),
            self.identity,
            domain.face_tolerance,
        )

    def step(self, x, increment):
        x = np.asarray(x, dtype=float)
        active_faces(self.domain, x)
        z, ell, it, status = self.kernels.sp_step(x, np.asarray(increment, dtype=float), *self.args)
        if status != OK:
            raise LcpRayTermination(f"step LCP failed (status {status}) at {x.tolist()}", state=x)
        return z, ell

    def path(self, psi: DiscretePath) -> EspSolution:
        if psi.dimension != self.domain.dimension:
            raise ValueError("path and domain dimensions differ")
        x0 = psi.values[0]
        active_faces(self.domain, x0)
        incs = np.ascontiguousarray(np.diff(psi.values, axis=0))
        Z, L, iters, status, fail = self.kernels.sp_path(x0, incs, *self.args)
        if status != OK:
            raise LcpRayTermination(f"step {fail}: LCP failed (status {status})", step=fail,
                                    state=Z[fail - 1])
        eta = np.vstack([np.zeros((1, self.domain.dimension)), np.cumsum(L @ self.domain.directions, axis=0)])
        return EspSolution(
            DiscretePath(psi.times, Z),
            DiscretePath(psi.times, eta),
            L,
            {"lcp_iterations": iters, "backend": self.kernels.__name__.rsplit(".", 1)[-1]},
        )


def _stepper(domain: PolyhedralDomain) -> SkorokhodStepper:
    st = domain._cache.get("stepper")
    if st is None:
        st = domain._cache["stepper"] = SkorokhodStepper(domain)
    return st


def solve_sp_step(domain: PolyhedralDomain, x, increment):
    """One constrained step: returns ``(z, local_times)`` with ``z = x + inc + sum l^i d^i``."""
    return _stepper(domain).step(x, increment)


def solve_sp_path(domain: PolyhedralDomain, psi: DiscretePath) -> EspSolution:
    return _stepper(domain).path(psi)


def _faces_near(domain: PolyhedralDomain, x) -> np.ndarray:
    s = domain.slacks(x)
    return np.flatnonzero(np.abs(s) <= domain.tolerance_at(x))


def verify_hull_property(domain: PolyhedralDomain, phi: DiscretePath, eta: DiscretePath,
                         window: tuple[int, int], tol: float = 1e-9) -> bool:
    """Is ``eta[t] - eta[s]`` in the cone of directions active along ``phi[s..t]``?

    Points of ``phi`` outside the closed domain contribute no directions.
    """
    if not phi.same_grid(eta):
        raise GridMismatch("phi and eta are on different time grids")
    s, t = int(window[0]), int(window[1])
    if not 0 <= s < t < len(phi):
        raise ValueError(f"bad window {window} for a path of length {len(phi)}")
    faces = set()
    for j in range(s, t + 1):
        faces.update(int(i) for i in _faces_near(domain, phi.values[j]))
    cone = ConeDescription.from_generators(domain.directions[sorted(faces)], domain.dimension)
    return cone_membership(cone, eta.values[t] - eta.values[s], tol)
