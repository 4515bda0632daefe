from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from fracdiff.services.mittag_leffler import (
    MittagLefflerConvergenceError,
    MittagLefflerDomainError,
    MlQuery,
    ml,
    ml_deriv,
    mittag_leffler,
    mittag_leffler_deriv,
)

GOLDEN_Z = np.linspace(-50.0, 0.0, 50)
ORDERS = (0.1, 0.3, 0.5, 0.7, 0.9)


def test_order_one_is_exponential():
    values = mittag_leffler(1.0, 1.0, GOLDEN_Z)
    np.testing.assert_allclose(values, np.exp(GOLDEN_Z), rtol=0.0, atol=1e-10)


def test_order_two_is_cosine():
    x = np.sqrt(-GOLDEN_Z)
    values = mittag_leffler(2.0, 1.0, GOLDEN_Z)
    np.testing.assert_allclose(values, np.cos(x), rtol=0.0, atol=1e-10)


def test_order_half_is_scaled_erfc():
    x = -GOLDEN_Z
    values = mittag_leffler(0.5, 1.0, GOLDEN_Z)
    np.testing.assert_allclose(values, special.erfcx(x), rtol=0.0, atol=1e-10)


def test_order_half_positive_argument():
    assert ml(MlQuery(0.5, 1.0, 2.0)) == pytest.approx(special.erfcx(-2.0), rel=1e-12)


def test_zero_argument_gives_reciprocal_gamma():
    assert ml(MlQuery(0.5, 2.0, 0.0)) == 1.0
    assert ml(MlQuery(0.3, 0.5, 0.0)) == pytest.approx(1.0 / math.gamma(0.5), rel=1e-15)


def test_scalar_and_array_shapes():
    assert isinstance(mittag_leffler(0.5, 1.0, -0.5), float)
    grid = mittag_leffler(0.5, 1.0, -np.ones((2, 3)))
    assert grid.shape == (2, 3)
    assert np.all(grid == grid[0, 0])


@pytest.mark.parametrize(
    ("beta", "nu"),
    [(0.0, 1.0), (-0.5, 1.0), (2.5, 1.0), (0.5, 0.0), (math.nan, 1.0)],
)
def test_domain_errors(beta, nu):
    with pytest.raises(MittagLefflerDomainError):
        mittag_leffler(beta, nu, -1.0)


def test_non_finite_argument_rejected():
    with pytest.raises(MittagLefflerDomainError):
        MlQuery(0.5, 1.0, math.inf)


def test_huge_positive_argument_overflows():
    with pytest.raises(MittagLefflerConvergenceError) as info:
        ml(MlQuery(0.5, 1.0, 40.0))
    assert info.value.region == "series"


def test_order_one_without_closed_form_outside_disc():
    with pytest.raises(MittagLefflerConvergenceError):
        mittag_leffler(1.0, 2.0, -5.0)


@pytest.mark.parametrize("beta", ORDERS)
def test_complete_monotonicity(beta):
    x = np.geomspace(1e-3, 1e3, 60)
    values = mittag_leffler(beta, 1.0, -x)
    assert np.all(values > 0.0)
    assert np.all(np.diff(values) < 0.0)
    slopes = np.diff(values) / np.diff(x)
    assert np.all(np.diff(slopes) > 0.0)


@pytest.mark.parametrize("beta", ORDERS)
def test_asymptotic_ratio(beta):
    x = np.linspace(100.0, 1000.0, 25)
    ratio = mittag_leffler(beta, 1.0, -x) * x * math.gamma(1.0 - beta)
    assert np.max(np.abs(ratio - 1.0) * x) <= 5.0


@pytest.mark.parametrize("beta", (0.3, 0.5, 0.8))
def test_asymptotic_error_decays_like_one_over_x(beta):
    def error(x):
        return abs(ml(MlQuery(beta, 1.0, -x)) * x * math.gamma(1.0 - beta) - 1.0)

    # 5% slack: the next expansion term moves x * error by well under 1% past 1e3.
    constant = 1.05 * error(1e3) * 1e3
    for x in (1e4, 1e5):
        assert error(x) <= constant / x


@pytest.mark.parametrize("beta", ORDERS)
def test_uniform_bound(beta):
    coarse = np.concatenate(([0.0], np.geomspace(1e-2, 1e6, 9)))
    fine = np.concatenate(([0.0], np.geomspace(1e-4, 1e6, 400)))
    ceiling = np.max(mittag_leffler(beta, 1.0, -coarse) * (1.0 + coarse))
    scaled = mittag_leffler(beta, 1.0, -fine) * (1.0 + fine)
    assert np.max(scaled) <= 1.01 * ceiling
    assert np.max(scaled) <= 1.0 + 1e-12


@pytest.mark.parametrize("beta", (0.1, 0.4, 0.7, 0.9))
@pytest.mark.parametrize("same_nu", [False, True])
def test_derivative_is_largest_at_zero(beta, same_nu):
    nu = beta if same_nu else 1.0
    x = 10.0 ** (np.arange(-20, 31) / 10.0)
    at_zero = ml_deriv(MlQuery(beta, nu, 0.0))
    assert at_zero == pytest.approx(1.0 / math.gamma(beta + nu), rel=1e-15)
    assert np.all(np.abs(mittag_leffler_deriv(beta, nu, -x)) <= at_zero)


@pytest.mark.parametrize(("beta", "z"), [(0.7, -0.5), (0.7, -3.0), (0.7, -30.0), (0.4, -8.0), (1.5, -4.0)])
def test_derivative_matches_central_difference(beta, z):
    h = 1e-5
    left, right = mittag_leffler(beta, 1.0, np.array([z - h, z + h]))
    expected = (right - left) / (2.0 * h)
    assert ml_deriv(MlQuery(beta, 1.0, z)) == pytest.approx(expected, rel=1e-6, abs=1e-8)


def test_derivative_matches_central_difference_at_random_points():
    rng = np.random.default_rng(20240601)
    h = 1e-5
    for beta, z in zip(rng.uniform(0.05, 0.95, 100), rng.uniform(-100.0, 0.0, 100)):
        left, right = mittag_leffler(beta, 1.0, np.array([z - h, z + h]))
        expected = (right - left) / (2.0 * h)
        assert ml_deriv(MlQuery(beta, 1.0, z)) == pytest.approx(expected, rel=0.0, abs=1e-7)


def test_derivative_identity_for_nu_one():
    z = np.array([-0.3, -2.5, -12.0])
    derivative = mittag_leffler_deriv(0.6, 1.0, z)
    np.testing.assert_allclose(derivative, mittag_leffler(0.6, 0.6, z) / 0.6, rtol=1e-8, atol=1e-12)


def test_derivative_order_one():
    z = np.array([-4.0, -0.5, 0.0, 0.7])
    np.testing.assert_allclose(mittag_leffler_deriv(1.0, 1.0, z), np.exp(z), rtol=1e-15)


def test_derivative_at_zero():
    assert ml_deriv(MlQuery(0.5, 1.0, 0.0)) == pytest.approx(1.0 / math.gamma(1.5), rel=1e-15)
