import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import completely_s_grid, grid_cone_projection, uv_simplex_grid
from sklab.errors import DomainTooLarge, DomainValidationError, PointOutsideDomain
from sklab.geometry import (
    BoundaryClass,
    ConeDescription,
    Face,
    PolyhedralDomain,
    active_faces,
    classify_boundary_point,
    cone_membership,
    direction_cone,
    domain_from_dict,
    half_line,
    is_completely_s,
    load_domain,
    orthant,
    project_to_cone,
    stratum_point,
    v_table,
)


def oblique(c):
    return orthant(2, [[1.0, -c], [-c, 1.0]])


def test_face_requires_unit_vectors_and_positive_pairing():
    with pytest.raises(DomainValidationError):
        Face(np.array([2.0, 0.0]), 0.0, np.array([1.0, 0.0]))
    with pytest.raises(DomainValidationError):
        Face(np.array([1.0, 0.0]), 0.0, np.array([-1.0, 0.0]))
    f = Face.from_raw([2.0, 0.0], 1.0, [3.0, 4.0])
    assert np.allclose(f.normal, [1, 0]) and f.offset == pytest.approx(0.5)
    assert np.allclose(f.direction, [0.6, 0.8])


def test_active_faces_examples():
    assert active_faces(half_line(), [0.0]) == (0,)
    O = orthant(2)
    assert active_faces(O, [1.0, 1.0]) == ()
    assert active_faces(O, [0.0, 0.0]) == (0, 1)
    assert active_faces(O, [1e-12, 3.0]) == (0,)


def test_active_faces_rejects_outside_points():
    with pytest.raises(PointOutsideDomain) as exc:
        active_faces(orthant(2), [-0.1, 1.0])
    assert exc.value.faces == (0,)


def test_active_faces_monotone_under_moving_onto_faces():
    O = orthant(3)
    x = np.array([0.0, 1.0, 2.0])
    y = x.copy()
    y[1] = 0.0
    assert set(active_faces(O, x)) <= set(active_faces(O, y))


def test_direction_cone_examples():
    O = orthant(2)
    cone = direction_cone(O, [0.0, 2.0])
    assert np.allclose(cone.generators, [[1.0, 0.0]])
    assert len(direction_cone(O, [1.0, 1.0])) == 0
    c = 0.6
    Ob = oblique(c)
    cone = direction_cone(Ob, [0.0, 0.0])
    k = 1 / np.sqrt(1 + c * c)
    assert np.allclose(cone.generators, [[k, -c * k], [-c * k, k]])


def test_classification_examples_against_simplex_grid():
    assert classify_boundary_point(half_line(), [0.0]) is BoundaryClass.INTERIOR_U
    assert classify_boundary_point(orthant(2), [1.0, 1.0]) is BoundaryClass.INTERIOR
    for c, expected in ((2.0, BoundaryClass.IN_V), (0.5, BoundaryClass.INTERIOR_U)):
        D = oblique(c)
        assert classify_boundary_point(D, [0.0, 0.0]) is expected
        assert uv_simplex_grid(D.normals, D.directions) == (expected is BoundaryClass.INTERIOR_U)


def test_classification_threshold_is_c_equal_one():
    # analytically the corner is in U iff c < 1
    assert classify_boundary_point(oblique(0.99), [0, 0]) is BoundaryClass.INTERIOR_U
    assert classify_boundary_point(oblique(1.01), [0, 0]) is BoundaryClass.IN_V


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_classification_scale_invariant(s1, s2, a, b):
    R = np.array([[1.0, a], [b, 1.0]])
    D1 = orthant(2, R)
    D2 = orthant(2, R * np.array([s1, s2]))
    assert classify_boundary_point(D1, [0, 0]) is classify_boundary_point(D2, [0, 0])


def test_completely_s_examples():
    cs = is_completely_s(orthant(2))
    assert cs and cs.witness is None
    bad = is_completely_s(oblique(2.0))
    assert not bad and bad.witness == (0, 1)
    R3 = np.eye(3) + 0.1 * (np.ones((3, 3)) - np.eye(3))
    assert is_completely_s(orthant(3, R3))
    assert completely_s_grid(R3)[0]


def test_completely_s_matches_grid_oracle_on_random_matrices():
    rng = np.random.default_rng(5)
    for J in (1, 2, 3, 4):
        for _ in range(15):
            R = np.eye(J) + rng.uniform(-1.2, 1.2, (J, J)) * (1 - np.eye(J))
            got = bool(is_completely_s(orthant(J, R)))
            want, _ = completely_s_grid(R, n=40 if J <= 3 else 24)
            assert got == want, R


def test_completely_s_certificate_and_v_table():
    cs = is_completely_s(oblique(0.5))
    cert = cs.certificate
    assert set(cert["margins"]) == {(0,), (1,), (0, 1)}
    assert all(t > 0 for t in cert["margins"].values())
    assert not v_table(oblique(0.5)).any()
    vt = v_table(oblique(2.0))
    assert vt[0b11] == 1 and vt[0b01] == 0 and vt[0b10] == 0


def test_stratum_point_skips_empty_strata():
    # a strip 0 <= x1 <= 1: faces 0 and 1 never meet
    faces = [Face.from_raw([1, 0], 0, [1, 0]), Face.from_raw([-1, 0], -1, [-1, 0])]
    D = PolyhedralDomain(faces)
    assert stratum_point(D, (0, 1)) is None
    assert np.allclose(D.normals @ stratum_point(D, (0,)) - D.offsets, [0, 1])
    assert is_completely_s(D)


def test_domain_validation():
    with pytest.raises(DomainValidationError):
        # empty interior
        PolyhedralDomain([Face.from_raw([1], 1, [1]), Face.from_raw([-1], 0, [-1])])
    with pytest.raises(DomainValidationError):
        # the second face is redundant
        PolyhedralDomain([Face.from_raw([1, 0], 0, [1, 0]), Face.from_raw([1, 0], -1, [1, 0])])


def test_strata_cap():
    faces = [Face.from_raw([np.cos(a), np.sin(a)], -1.0, [np.cos(a), np.sin(a)])
             for a in np.linspace(0, 2 * np.pi, 17, endpoint=False)]
    with pytest.raises(DomainTooLarge):
        is_completely_s(PolyhedralDomain(faces))


def test_domain_file_round_trip(tmp_path):
    D = oblique(0.5)
    p = tmp_path / "d.json"
    p.write_text(json.dumps(D.to_dict()))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        E = load_domain(p)
    assert np.allclose(E.directions, D.directions)


def test_domain_file_normalizes_with_warning_and_reports_position(tmp_path):
    with pytest.warns(UserWarning, match="normalized"):
        D = domain_from_dict({"dimension": 1, "faces": [{"normal": [2.0], "offset": 0, "direction": [3.0]}]})
    assert D.directions[0, 0] == 1.0
    p = tmp_path / "bad.json"
    p.write_text('{"dimension": 1,\n "faces": [}')
    with pytest.raises(DomainValidationError, match=r"bad.json:2:"):
        load_domain(p)


def test_project_to_cone_examples():
    e1 = ConeDescription.from_generators([[1.0, 0.0]], 2)
    assert np.allclose(project_to_cone(e1, [2.0, 3.0]), [2.0, 0.0])
    both = ConeDescription.from_generators(np.eye(2), 2)
    assert np.allclose(project_to_cone(both, [-1.0, -1.0]), [0.0, 0.0])
    gens = np.array([[1.0, 0.0], [1.0, 1.0]])
    cone = ConeDescription.from_generators(gens, 2)
    p = project_to_cone(cone, [0.0, 1.0])
    assert np.allclose(p, [0.5, 0.5])
    assert np.allclose(p, grid_cone_projection(gens, np.array([0.0, 1.0])), atol=5e-3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_projection_kkt(vals):
    G = np.array(vals[:6]).reshape(3, 2)
    y = np.array(vals[6:8])
    cone = ConeDescription.from_generators(G, 2)
    p = project_to_cone(cone, y)
    r = y - p
    assert abs(r @ p) <= 1e-9 * (1 + np.linalg.norm(y) ** 2)
    assert np.all(G @ r <= 1e-9 * (1 + np.linalg.norm(y)))
    assert cone_membership(cone, p, 1e-9)


def test_cone_membership_examples():
    e1 = ConeDescription.from_generators([[1.0, 0.0]], 2)
    assert cone_membership(e1, [1.0, 0.0], 1e-9)
    assert not cone_membership(e1, [0.0, 1.0], 1e-9)
    cone = ConeDescription.from_generators([[1.0, 0.0], [1.0, 1.0]], 2)
    assert cone_membership(cone, [2.0, 1.0], 1e-9)
    trivial = ConeDescription.from_generators([], 2)
    assert cone_membership(trivial, [0.0, 0.0], 0.0)
    assert not cone_membership(trivial, [1e-6, 0.0], 1e-9)
    with pytest.raises(ValueError):
        cone_membership(e1, [1.0, 0.0], -1.0)
