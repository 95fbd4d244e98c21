import warnings

import numpy as np
import pytest

from sklab.errors import NonCompletelyS, NonStationaryWarning
from sklab.generator import (
    TestFunction,
    constant_coefficients,
    make_bump_test_fn,
    make_interior_bump_test_fn,
    make_linear_test_fn,
    ou_coefficients,
)
from sklab.geometry import half_line, orthant
from sklab.simulate import SimConfig
from sklab.stationary import (
    StationaryEstimate,
    batch_means_se,
    check_stationary_characterization,
    estimate_stationary,
)


def square_fn():
    return TestFunction(lambda x: (np.asarray(x) ** 2).sum(-1), lambda x: 2.0 * np.asarray(x),
                        lambda x: np.broadcast_to(2.0 * np.eye(1), np.shape(x)[:-1] + (1, 1)), 1)


def rbm_estimate(mu, seed=1):
    coeffs = constant_coefficients([-mu], [[1.0]])
    cfg = SimConfig(1e-2, 200.0, 16, seed, (0.0,), scheme="bridge")
    return estimate_stationary(half_line(), coeffs, cfg, burn_in=10.0, thin=10), coeffs


def test_batch_means_se_on_iid_data():
    x = np.random.default_rng(0).standard_normal((8, 4000))
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.3)
    assert batch_means_se(np.ones(3), n_batches=1) == np.inf


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
def test_reflected_brownian_motion_with_drift(mu):
    # the stationary law is exponential with rate 2 mu
    est, coeffs = rbm_estimate(mu)
    se = est.moments["mean_se"][0]
    assert abs(est.mean[0] - 1 / (2 * mu)) <= 4 * se + 0.01 / mu
    assert est.variance[0] == pytest.approx(1 / (2 * mu) ** 2, rel=0.15)
    eps = 0.1
    assert est.boundary_mass_at(eps) == pytest.approx(1 - np.exp(-2 * mu * eps), abs=0.02)
    D = half_line()
    battery = [make_linear_test_fn(D, [1.0]), make_bump_test_fn(D, [0.0], 0.5 / mu),
               make_interior_bump_test_fn(D, [1 / mu], 0.5 / mu),
               make_interior_bump_test_fn(D, [1 / mu], 0.5 / mu, sign=-1)]
    rep = check_stationary_characterization(est, coeffs, battery)
    assert rep["passed"], rep
    # interior functions integrate to zero under the stationary law
    for row in rep["functions"][2:]:
        assert abs(row["integral"]) <= 4 * row["std_error"]


def test_point_mass():
    coeffs = constant_coefficients([0.0, 0.0], np.zeros((2, 2)))
    cfg = SimConfig(0.1, 100.0, 2, 0, (1.0, 2.0))
    est = estimate_stationary(orthant(2), coeffs, cfg, burn_in=1.0, thin=1)
    assert np.array_equal(est.mean, [1.0, 2.0]) and not est.variance.any()
    assert est.boundary_mass_at(0.5) == 0.0
    tab = est.boundary_mass_table()
    assert tab["intercept"] == 0.0 and tab["consistent_with_zero"]


def test_wrong_distribution_is_detected():
    # uniform on [0, 0.5] is not stationary for drift -1: int L x^2 = int (1 - 2x) = 0.5
    coeffs = constant_coefficients([-1.0], [[1.0]])
    samples = np.random.default_rng(3).uniform(0, 0.5, (8, 4000, 1))
    est = StationaryEstimate(half_line(), samples, 0.0, 1, 1.0)
    rep = check_stationary_characterization(est, coeffs, [square_fn()])
    assert rep["functions"][0]["integral"] == pytest.approx(0.5, abs=0.01)
    assert not rep["passed"]


def test_integral_is_linear_in_f():
    est, coeffs = rbm_estimate(1.0)
    f = make_bump_test_fn(half_line(), [0.0], 0.5)
    rep = check_stationary_characterization(est, coeffs, [f, 2.5 * f])
    a, b = (r["integral"] for r in rep["functions"])
    assert b == pytest.approx(2.5 * a)


def test_two_dimensional_ou_in_orthant():
    # normal reflection with diagonal B: coordinates are independent half-normals
    coeffs = ou_coefficients(np.eye(2), np.eye(2))
    cfg = SimConfig(1e-2, 100.0, 8, 4, (0.5, 0.5), scheme="bridge")
    est = estimate_stationary(orthant(2), coeffs, cfg, burn_in=5.0, thin=10)
    assert np.allclose(est.mean, np.sqrt(1 / np.pi), atol=0.04)
    assert est.info["backend"] in ("compiled", "python")


def test_nonstationary_start_warns():
    coeffs = constant_coefficients([-1.0], [[0.1]])
    cfg = SimConfig(1e-2, 40.0, 4, 0, (30.0,))
    with pytest.warns(NonStationaryWarning):
        estimate_stationary(half_line(), coeffs, cfg, burn_in=0.0, thin=10)


def test_argument_checks():
    coeffs = constant_coefficients([-1.0], [[1.0]])
    with pytest.raises(ValueError, match="burn_in"):
        estimate_stationary(half_line(), coeffs, SimConfig(0.1, 10.0, 2, 0, (0.0,)), burn_in=5.0, thin=1)
    with pytest.raises(ValueError, match="samples"):
        estimate_stationary(half_line(), coeffs, SimConfig(0.1, 10.0, 2, 0, (0.0,)), burn_in=1.0, thin=10)
    bad = orthant(2, [[1.0, -2.0], [-2.0, 1.0]])
    with pytest.raises(NonCompletelyS):
        estimate_stationary(bad, ou_coefficients(np.eye(2), np.eye(2)), SimConfig(0.1, 10.0, 2, 0, (1.0, 1.0)),
                            burn_in=1.0)


def test_output_files(tmp_path):
    coeffs = constant_coefficients([-1.0], [[1.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonStationaryWarning)
        est = estimate_stationary(half_line(), coeffs, SimConfig(0.01, 20.0, 8, 0, (0.0,)), burn_in=2.0, thin=10)
    est.histogram_csv(tmp_path / "h.csv", bins=20)
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "coord,lo,hi,density" and len(rows) == 21
    dens = np.loadtxt(tmp_path / "h.csv", delimiter=",", skiprows=1)
    assert np.sum(dens[:, 3] * (dens[:, 2] - dens[:, 1])) == pytest.approx(1.0)
    est.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().startswith("t,mean_z1\n")
