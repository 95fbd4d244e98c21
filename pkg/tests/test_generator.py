import numpy as np
import pytest

from sklab.errors import CenterInV, ObliqueSignViolation, RadiusTooLarge
from sklab.generator import (
    TestFunction,
    apply_generator,
    check_admissible,
    admissibility_violations,
    constant_coefficients,
    make_bump_test_fn,
    make_coefficients,
    make_constant_test_fn,
    make_interior_bump_test_fn,
    make_linear_test_fn,
    ou_coefficients,
    state_diag_coefficients,
)
from sklab.geometry import half_line, orthant


def oblique(c):
    return orthant(2, [[1.0, -c], [-c, 1.0]])


def square_fn(J):
    return TestFunction(lambda x: (np.asarray(x) ** 2).sum(-1), lambda x: 2.0 * np.asarray(x),
                        lambda x: np.broadcast_to(2.0 * np.eye(J), np.shape(x)[:-1] + (J, J)), J)


def exp_fn(v):
    v = np.asarray(v, dtype=float)
    e = lambda x: np.exp(np.asarray(x) @ v)  # noqa: E731
    return TestFunction(e, lambda x: e(x)[..., None] * v,
                        lambda x: e(x)[..., None, None] * np.outer(v, v), v.size)


def fd_gradient(f, x, h=1e-6):
    J = x.size
    return np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(J)])


def fd_hessian(f, x, h=1e-5):
    J = x.size
    return np.array([(f.gradient(x + h * e) - f.gradient(x - h * e)) / (2 * h) for e in np.eye(J)])


def test_generator_examples_1d():
    bm = constant_coefficients([0.0], [[1.0]])
    assert apply_generator(bm, square_fn(1), [[0.3]]) == pytest.approx([1.0])
    drift = constant_coefficients([-2.0], [[1.0]])
    f = make_linear_test_fn(half_line(), [1.0])
    assert apply_generator(drift, f, [[5.0]]) == pytest.approx([-2.0])


def test_generator_linear_gives_drift_projection():
    D = orthant(3)
    coeffs = ou_coefficients(np.diag([1.0, 2.0, 3.0]), np.eye(3))
    v = np.array([1.0, 0.5, 2.0])
    x = np.random.default_rng(0).uniform(0, 2, (50, 3))
    got = apply_generator(coeffs, make_linear_test_fn(D, v), x)
    assert np.allclose(got, coeffs.b(x) @ v)


def test_generator_exponential_oracle():
    rng = np.random.default_rng(1)
    S = rng.standard_normal((2, 2))
    b = np.array([0.3, -0.7])
    v = np.array([0.4, -0.2])
    coeffs = constant_coefficients(b, S)
    x = rng.uniform(0, 1, (20, 2))
    want = (b @ v + 0.5 * v @ S @ S.T @ v) * np.exp(x @ v)
    assert np.allclose(apply_generator(coeffs, exp_fn(v), x), want)


def test_generator_state_dependent_dispersion():
    coeffs = state_diag_coefficients([0.0, 1.0], [1.0, 0.5], [0.5, 0.0])
    x = np.array([[2.0, 3.0]])
    # a = diag((1 + 0.5*2)^2, 0.5^2); L|x|^2 = 2 <b, x> + tr a
    assert apply_generator(coeffs, square_fn(2), x) == pytest.approx([2 * 3.0 + 4.0 + 0.25])


def test_generator_is_linear_in_f():
    D = orthant(2)
    coeffs = ou_coefficients(np.eye(2), [[1.0, 0.2], [0.0, 0.8]])
    f = make_bump_test_fn(D, [0.0, 0.5], 0.4)
    g = make_interior_bump_test_fn(D, [1.0, 1.0], 0.5)
    x = np.random.default_rng(2).uniform(0, 1.5, (200, 2))
    lhs = apply_generator(coeffs, 2.0 * f + (-g), x)
    rhs = 2.0 * apply_generator(coeffs, f, x) - apply_generator(coeffs, g, x)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


@pytest.mark.parametrize("make", [
    lambda: make_bump_test_fn(oblique(0.5), [0.0, 0.0], 0.6),
    lambda: make_bump_test_fn(oblique(0.5), [0.0, 1.0], 0.5, sign=1),
    lambda: make_bump_test_fn(orthant(3, np.eye(3) + 0.2), [0.0, 0.0, 1.0], 0.7),
    lambda: make_interior_bump_test_fn(orthant(2), [1.0, 1.0], 0.8),
])
def test_derivatives_match_finite_differences(make):
    f = make()
    rng = np.random.default_rng(3)
    J = f.dimension
    g = rng.standard_normal((100, J))
    pts = f.center + g * (f.support_radius * rng.uniform(size=(100, 1)) / np.linalg.norm(g, axis=1, keepdims=True))
    for x in pts:
        assert np.allclose(f.gradient(x), fd_gradient(f, x), atol=1e-6)
        assert np.allclose(f.hessian(x), fd_hessian(f, x), atol=1e-4)
        assert np.allclose(f.hessian(x), f.hessian(x).T)


def test_test_function_algebra():
    D = orthant(2)
    f = make_bump_test_fn(D, [0.0, 0.5], 0.4)
    g = make_bump_test_fn(D, [0.0, 0.5], 0.3)
    h = make_linear_test_fn(D, [1.0, 1.0])
    x = np.array([[0.1, 0.4], [0.0, 0.7]])
    assert np.allclose((f + g)(x), f(x) + g(x))
    assert (f + g).support_radius == 0.4 and (g + f).support_radius == 0.4
    assert np.isinf((f + h).support_radius)
    assert np.allclose((3 * f)(x), 3 * f(x))
    assert np.allclose((-f).gradient(x), -f.gradient(x))
    assert (f + g).constant_near_V and not (f + h).constant_near_V
    with pytest.raises(ValueError):
        f + make_constant_test_fn(3)


def test_half_line_bump_examples():
    f = make_bump_test_fn(half_line(), [0.0], 1.0, sign=1)
    assert f([0.0]) == pytest.approx(1.0)
    assert f([1.0]) == pytest.approx(0.0)
    assert f.gradient(np.array([0.0]))[0] == pytest.approx(0.0)
    assert f([f.kappa * 0.999]) == pytest.approx(1.0)
    # the admissible sign is -1: <d, grad(-f)> >= 0 at the boundary
    assert not admissibility_violations(half_line(), -f)
    assert admissibility_violations(half_line(), make_linear_test_fn(half_line(), [-1.0], check=False)) == [0]


@pytest.mark.parametrize("c", [0.0, 0.5, -0.5])
def test_corner_bump_sign_condition_and_support(c):
    D = oblique(c)
    r = 0.5
    f = make_bump_test_fn(D, [0.0, 0.0], r, sign=1)
    rng = np.random.default_rng(4)
    for i in range(2):
        t = rng.uniform(0, 1.2 * r, 1000)
        x = np.zeros((1000, 2))
        x[:, 1 - i] = t
        assert np.all(f.gradient(x) @ D.directions[i] <= 1e-12)
    x = rng.uniform(0, 2, (5000, 2))
    far = np.linalg.norm(x, axis=1) >= r
    assert np.all(f(x[far]) == 0.0)
    near = np.linalg.norm(x, axis=1) <= f.kappa
    assert near.any() and np.allclose(f(x[near]), 1.0)
    check_admissible(D, -f)


def test_bump_rejects_interior_centre():
    with pytest.raises(ValueError, match="boundary"):
        make_bump_test_fn(orthant(2), [1.0, 1.0], 0.5)


def test_bump_centre_in_v():
    with pytest.raises(CenterInV):
        make_bump_test_fn(oblique(2.0), [0.0, 0.0], 0.5)


def test_bump_radius_too_large():
    with pytest.raises(RadiusTooLarge):
        make_bump_test_fn(orthant(2), [0.0, 1.0], 1.5)
    make_bump_test_fn(orthant(2), [0.0, 1.0], 0.9)
    with pytest.raises(RadiusTooLarge):
        make_interior_bump_test_fn(orthant(2), [1.0, 2.0], 1.0)


def test_bump_sign_validation():
    with pytest.raises(ValueError):
        make_bump_test_fn(orthant(2), [0.0, 1.0], 0.5, sign=2)
    with pytest.raises(ValueError):
        make_bump_test_fn(orthant(2), [0.0, 1.0], -0.5)


def test_linear_oblique_sign_check():
    D = oblique(0.5)
    make_linear_test_fn(D, [1.0, 1.0])
    with pytest.raises(ObliqueSignViolation) as exc:
        make_linear_test_fn(D, [1.0, 0.0])
    assert tuple(exc.value.faces) == (1,)
    f = make_linear_test_fn(D, [1.0, 0.0], check=False)
    assert admissibility_violations(D, f) == [1]


def test_linear_rejected_for_steep_oblique_direction():
    D = orthant(2, [[1.0, 0.0], [-2.0, 1.0]])
    assert np.allclose(D.directions[0], np.array([1.0, -2.0]) / np.sqrt(5))
    with pytest.raises(ObliqueSignViolation):
        make_linear_test_fn(D, [0.0, 1.0])
    make_linear_test_fn(orthant(2), [1.0, 1.0])


def test_admissible_functions_form_a_cone():
    D = oblique(0.5)
    members = [make_linear_test_fn(D, [1.0, 1.0]), -make_bump_test_fn(D, [0.0, 0.0], 0.5, sign=1),
               make_bump_test_fn(D, [0.0, 1.0], 0.4), make_interior_bump_test_fn(D, [1.0, 1.0], 0.5, sign=-1)]
    rng = np.random.default_rng(6)
    for _ in range(10):
        w = rng.uniform(0, 3, len(members))
        f = w[0] * members[0]
        for wi, g in zip(w[1:], members[1:]):
            f = f + wi * g
        assert admissibility_violations(D, f) == []


def test_admissibility_flags_v_for_non_constant_functions():
    D = oblique(2.0)
    f = make_linear_test_fn(D, [1.0, 1.0], check=False)
    assert "V" in admissibility_violations(D, f)
    assert admissibility_violations(D, make_constant_test_fn(2)) == []


def test_interior_bump_both_signs_admissible():
    D = orthant(2)
    for s in (1, -1):
        f = make_interior_bump_test_fn(D, [1.0, 1.0], 0.5, sign=s)
        assert admissibility_violations(D, f) == []
        assert f([1.0, 1.0]) == pytest.approx(s)


def test_ellipticity_check():
    coeffs = constant_coefficients([0.0, 0.0], np.eye(2), ellipticity_floor=0.5)
    assert coeffs.check_ellipticity([0, 0], [1, 1]) == pytest.approx(1.0)
    degenerate = constant_coefficients([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]], ellipticity_floor=0.1)
    with pytest.raises(ValueError, match="ellipticity"):
        degenerate.check_ellipticity([0, 0], [1, 1])


def test_coefficient_registry():
    c = make_coefficients("ou", {"B": [[1.0]], "dispersion": [[2.0]], "mean": [1.0]})
    assert np.allclose(c.b(np.array([[3.0]])), [[-2.0]])
    assert np.allclose(c.a(np.array([[3.0]])), [[[4.0]]])
    with pytest.raises(ValueError, match="unknown"):
        make_coefficients("nope", {})
    with pytest.raises(ValueError, match="missing"):
        make_coefficients("constant", {"drift": [0.0]})
