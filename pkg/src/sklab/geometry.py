"""Convex polyhedral domains with piecewise-constant oblique reflection.

A domain is the intersection of half-spaces ``{x : <n^i, x> >= c_i}``; each
face carries one unit reflection direction ``d^i`` with ``<n^i, d^i> > 0``.
Everything here is immutable after construction and safe to share.
"""
from __future__ import annotations

import enum
import itertools
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog, lsq_linear

from .errors import (
    DomainTooLarge,
    DomainValidationError,
    LpNumericalFailure,
    PointOutsideDomain,
)

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
LP_STRICT_TOL = 1e-10
MAX_STRATA_FACES = 16


class BoundaryClass(str, enum.Enum):
    INTERIOR_U = "InteriorU"
    IN_V = "InV"
    INTERIOR = "Interior"


@dataclass(frozen=True)
class Face:
    """One face ``{x : <normal, x> = offset}``; the domain lies on the ``>`` side."""

    normal: np.ndarray
    offset: float
    direction: np.ndarray

    def __post_init__(self):
        n = np.array(self.normal, dtype=float).reshape(-1)
        d = np.array(self.direction, dtype=float).reshape(-1)
        if n.shape != d.shape:
            raise DomainValidationError("normal and direction differ in dimension")
        if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL or abs(np.linalg.norm(d) - 1.0) > UNIT_TOL:
            raise DomainValidationError("face normal and direction must be unit vectors")
        if not float(n @ d) > 0.0:
            raise DomainValidationError("reflection direction must satisfy <n, d> > 0")
        n.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_raw(cls, normal, offset, direction) -> "Face":
        """Build a face from possibly non-unit vectors, rescaling the offset."""
        n = np.asarray(normal, dtype=float).reshape(-1)
        d = np.asarray(direction, dtype=float).reshape(-1)
        nn, dn = np.linalg.norm(n), np.linalg.norm(d)
        if nn == 0.0 or dn == 0.0:
            raise DomainValidationError("zero normal or direction vector")
        return cls(n / nn, float(offset) / nn, d / dn)

    def slack(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.normal - self.offset


@dataclass(frozen=True)
class ConeDescription:
    """Finitely generated convex cone with vertex at the origin.

    An empty generator list is the trivial cone ``{0}``.
    """

    generators: np.ndarray
    dimension: int

    @classmethod
    def from_generators(cls, generators: Iterable, dimension: int) -> "ConeDescription":
        g = np.array([np.asarray(v, dtype=float).reshape(-1) for v in generators], dtype=float)
        g = g.reshape(-1, dimension)
        g.setflags(write=False)
        return cls(g, dimension)

    def __len__(self):
        return self.generators.shape[0]


@dataclass(frozen=True)
class CompletelySResult:
    """Outcome of the generalized completely-S audit.

    ``margins`` maps every nonempty stratum (tuple of face indices) to the LP
    optimum ``t*``; ``witness`` is the smallest stratum with ``t*`` at or below
    the strictness tolerance, or None when the domain passes.
    """

    value: bool
    margins: dict
    witness: tuple | None
    points: dict = field(repr=False, default_factory=dict)

    def __bool__(self):
        return self.value

    @property
    def certificate(self) -> dict:
        """Per-stratum LP margins and representative points."""
        return {"margins": dict(self.margins), "points": {k: v.tolist() for k, v in self.points.items()}}

    @property
    def v_strata(self) -> frozenset:
        return frozenset(s for s, t in self.margins.items() if t <= LP_STRICT_TOL)


class PolyhedralDomain:
    """Intersection of half-spaces with one reflection direction per face."""

    def __init__(self, faces: Sequence[Face], face_tolerance: float = 1e-9, dimension: int | None = None):
        faces = tuple(faces)
        if not faces:
            raise DomainValidationError("a domain needs at least one face")
        dims = {f.normal.shape[0] for f in faces}
        if len(dims) != 1:
            raise DomainValidationError("faces disagree on the ambient dimension")
        (dim,) = dims
        if dimension is not None and int(dimension) != dim:
            raise DomainValidationError(f"declared dimension {dimension} but faces live in R^{dim}")
        if not face_tolerance > 0:
            raise DomainValidationError("face_tolerance must be positive")
        self.dimension = dim
        self.faces = faces
        self.face_tolerance = float(face_tolerance)
        self.normals = np.array([f.normal for f in faces])
        self.offsets = np.array([f.offset for f in faces])
        self.directions = np.array([f.direction for f in faces])
        # reflection[i, j] = <n^i, d^j>: slack of face i gained per unit push along d^j
        self.reflection = self.normals @ self.directions.T
        for a in (self.normals, self.offsets, self.directions, self.reflection):
            a.setflags(write=False)
        self._cache: dict = {}
        self.interior_point = self._find_interior_point()
        self._check_redundancy()

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def __repr__(self):
        return f"PolyhedralDomain(dimension={self.dimension}, n_faces={self.n_faces})"

    def slacks(self, x) -> np.ndarray:
        """Face slacks ``<n^i, x> - c_i``; broadcasts over leading axes of x."""
        return np.asarray(x, dtype=float) @ self.normals.T - self.offsets

    def tolerance_at(self, x) -> float:
        return self.face_tolerance * (1.0 + float(np.linalg.norm(x)))

    def contains(self, x, tol: float | None = None) -> bool:
        tol = self.tolerance_at(x) if tol is None else tol
        return bool(np.all(self.slacks(x) >= -tol))

    def distance_to_boundary(self, x) -> np.ndarray:
        """Distance of (closed-domain) points to the boundary; vectorized."""
        return np.maximum(self.slacks(x).min(axis=-1), 0.0)

    def _find_interior_point(self) -> np.ndarray:
        J, m = self.dimension, self.n_faces
        # maximize r subject to <n^i, x> - c_i >= r, r <= 1
        c = np.zeros(J + 1)
        c[-1] = -1.0
        A = np.hstack([-self.normals, np.ones((m, 1))])
        res = linprog(c, A_ub=A, b_ub=-self.offsets, bounds=[(None, None)] * J + [(None, 1.0)],
                      method="highs")
        if res.status != 0:
            raise DomainValidationError(f"interior-point LP failed: {res.message}")
        if not -res.fun > 1e-9:
            raise DomainValidationError("the half-space intersection has empty interior")
        x = res.x[:J]
        x.setflags(write=False)
        return x

    def _check_redundancy(self):
        J = self.dimension
        for i in range(self.n_faces):
            res = linprog(self.normals[i], A_ub=-self.normals, b_ub=-self.offsets,
                          bounds=[(None, None)] * J, method="highs")
            if res.status == 3:
                raise DomainValidationError(f"face {i}: LP unbounded, domain inconsistent")
            if res.status != 0:
                raise DomainValidationError(f"face {i}: redundancy LP failed: {res.message}")
            gap = res.fun - self.offsets[i]
            if gap > 1e-7 * (1.0 + abs(self.offsets[i])):
                raise DomainValidationError(f"face {i} is redundant: it does not touch the closure")

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "faces": [
                {"normal": f.normal.tolist(), "offset": f.offset, "direction": f.direction.tolist()}
                for f in self.faces
            ],
        }


def orthant(dimension: int, reflection=None, face_tolerance: float = 1e-9) -> PolyhedralDomain:
    """The nonnegative orthant; ``reflection`` holds the directions as columns."""
    eye = np.eye(dimension)
    R = eye if reflection is None else np.asarray(reflection, dtype=float)
    if R.shape != (dimension, dimension):
        raise DomainValidationError("reflection matrix must be J x J")
    faces = [Face.from_raw(eye[i], 0.0, R[:, i]) for i in range(dimension)]
    return PolyhedralDomain(faces, face_tolerance=face_tolerance)


def half_line(offset: float = 0.0, face_tolerance: float = 1e-9) -> PolyhedralDomain:
    return PolyhedralDomain([Face(np.array([1.0]), offset, np.array([1.0]))], face_tolerance=face_tolerance)


def domain_from_dict(data: Mapping, face_tolerance: float | None = None) -> PolyhedralDomain:
    try:
        dim = int(data["dimension"])
        raw = data["faces"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainValidationError(f"domain file needs 'dimension' and 'faces': {exc}") from exc
    faces = []
    for k, entry in enumerate(raw):
        try:
            n = np.asarray(entry["normal"], dtype=float)
            d = np.asarray(entry["direction"], dtype=float)
            c = float(entry.get("offset", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainValidationError(f"face {k}: {exc}") from exc
        if n.shape != (dim,) or d.shape != (dim,):
            raise DomainValidationError(f"face {k}: vectors must have length {dim}")
        if abs(np.linalg.norm(n) - 1) > UNIT_TOL or abs(np.linalg.norm(d) - 1) > UNIT_TOL:
            warnings.warn(f"face {k}: non-unit normal or direction normalized on load", stacklevel=2)
        faces.append(Face.from_raw(n, c, d))
    tol = data.get("face_tolerance", 1e-9) if face_tolerance is None else face_tolerance
    return PolyhedralDomain(faces, face_tolerance=float(tol), dimension=dim)


def load_domain(path) -> PolyhedralDomain:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return domain_from_dict(data)


# -- point queries -----------------------------------------------------------

def active_faces(domain: PolyhedralDomain, x) -> tuple:
    """Indices of faces within the tolerance band of ``x`` (empty in the interior)."""
    x = np.asarray(x, dtype=float)
    s = domain.slacks(x)
    tol = domain.tolerance_at(x)
    outside = np.flatnonzero(s < -tol)
    if outside.size:
        raise PointOutsideDomain(f"point violates faces {outside.tolist()}", point=x, faces=outside)
    return tuple(int(i) for i in np.flatnonzero(np.abs(s) <= tol))


def direction_cone(domain: PolyhedralDomain, x) -> ConeDescription:
    idx = active_faces(domain, x)
    return ConeDescription.from_generators(domain.directions[list(idx)], domain.dimension)


def normal_cone(domain: PolyhedralDomain, x) -> ConeDescription:
    idx = active_faces(domain, x)
    return ConeDescription.from_generators(domain.normals[list(idx)], domain.dimension)


def stratum_margin(domain: PolyhedralDomain, stratum: Sequence[int]) -> tuple[float, np.ndarray]:
    """Best worst-case inner product between a normal and the stratum's directions.

    Solves ``max t`` over ``n = sum s_i n^i`` with ``s`` in the unit simplex and
    ``<n, d^j> >= t`` for every j in the stratum. Returns ``(t*, n)``.
    """
    S = list(stratum)
    k = len(S)
    if k == 0:
        return np.inf, np.zeros(domain.dimension)
    M = domain.reflection[np.ix_(S, S)]  # M[i, j] = <n^i, d^j>
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M.T, np.ones((k, 1))])
    A_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * k + [(None, None)], method="highs")
    if res.status != 0:
        raise LpNumericalFailure(f"U/V LP failed on stratum {tuple(S)}: {res.message}", stratum=tuple(S))
    weights = res.x[:k]
    return float(-res.fun), weights @ domain.normals[S]


def classify_boundary_point(domain: PolyhedralDomain, x, lp_strict_tol: float = LP_STRICT_TOL) -> BoundaryClass:
    idx = active_faces(domain, x)
    if not idx:
        return BoundaryClass.INTERIOR
    t, _ = stratum_margin(domain, idx)
    return BoundaryClass.INTERIOR_U if t > lp_strict_tol else BoundaryClass.IN_V


def stratum_point(domain: PolyhedralDomain, stratum: Sequence[int]) -> np.ndarray | None:
    """A point where exactly the faces of ``stratum`` are active, or None if none exists."""
    S = sorted(stratum)
    others = [j for j in range(domain.n_faces) if j not in S]
    J = domain.dimension
    c = np.zeros(J + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-domain.normals[others], np.ones((len(others), 1))]) if others else None
    b_ub = -domain.offsets[others] if others else None
    A_eq = np.hstack([domain.normals[S], np.zeros((len(S), 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=domain.offsets[S],
                  bounds=[(None, None)] * J + [(None, 1.0)], method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise LpNumericalFailure(f"stratum point LP failed on {tuple(S)}: {res.message}", stratum=tuple(S))
    if -res.fun <= 1e-9:
        return None
    x = res.x[:J]
    # least-squares polish onto the faces of the stratum
    NS = domain.normals[S]
    x = x - np.linalg.lstsq(NS, NS @ x - domain.offsets[S], rcond=None)[0]
    if tuple(active_faces(domain, x)) != tuple(S):
        return None
    return x


def is_completely_s(domain: PolyhedralDomain, lp_strict_tol: float = LP_STRICT_TOL) -> CompletelySResult:
    """Generalized completely-S test: every nonempty boundary stratum lies in U.

    Strata are visited by size, then lexicographically, so the reported
    witness is a smallest failing face set.
    """
    key = ("completely_s", lp_strict_tol)
    if key in domain._cache:
        return domain._cache[key]
    m = domain.n_faces
    if m > MAX_STRATA_FACES:
        raise DomainTooLarge(f"{m} faces exceed the strata enumeration cap of {MAX_STRATA_FACES}")
    margins, points, witness = {}, {}, None
    for size in range(1, m + 1):
        for S in itertools.combinations(range(m), size):
            x = stratum_point(domain, S)
            if x is None:
                continue
            try:
                t, _ = stratum_margin(domain, S)
            except LpNumericalFailure as exc:
                exc.stratum = S
                raise
            margins[S] = t
            points[S] = x
            if witness is None and t <= lp_strict_tol:
                witness = S
    result = CompletelySResult(witness is None, margins, witness, points)
    domain._cache[key] = result
    return result


def v_table(domain: PolyhedralDomain) -> np.ndarray:
    """Lookup over active-face bitmasks: 1 where the stratum belongs to V."""
    cs = is_completely_s(domain)
    table = np.zeros(1 << domain.n_faces, dtype=np.uint8)
    for S in cs.v_strata:
        table[sum(1 << i for i in S)] = 1
    return table


# -- cones -------------------------------------------------------------------

def project_to_cone(cone: ConeDescription, y) -> np.ndarray:
    """Metric projection of ``y`` onto the cone: nonnegative least squares on generator weights.

    Solved with the bounded-variable least-squares method; ``scipy.optimize.nnls``
    returns non-optimal weights on some degenerate inputs in recent SciPy releases.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(cone) == 0:
        return np.zeros_like(y)
    G = cone.generators
    res = lsq_linear(G.T, y, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
    return G.T @ np.maximum(res.x, 0.0)


def cone_membership(cone: ConeDescription, y, tol: float = 1e-9) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    y = np.asarray(y, dtype=float).reshape(-1)
    return bool(np.linalg.norm(project_to_cone(cone, y) - y) <= tol)
