from __future__ import annotations

import numpy as np
import pytest

from fracdiff.services.errors import DomainError
from fracdiff.services.inverse_objective import (
    DegenerateSignalError,
    ObservationSet,
    ResidualModel,
    StepOutOfDomainError,
    make_observations,
    trapezoid_weights,
)
from fracdiff.services.mittag_leffler import mittag_leffler_deriv
from fracdiff.services.spectral_forward import FractionalTriple, ParameterBox, SpectralExpansion, mu, trace_at_center


def _column_error(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.max(np.abs(approx - exact)) / np.max(np.abs(exact)))


def test_trapezoid_weights_three_uniform_nodes():
    h = 1.0 / 3.0
    weights = trapezoid_weights(np.array([1.0, 2.0, 3.0]) * h)
    np.testing.assert_allclose(weights, [h / 2.0, h, h / 2.0], rtol=1e-15)


def test_trapezoid_weights_integrate_affine_exactly():
    times = np.sort(np.random.default_rng(2).uniform(0.05, 1.0, 17))
    weights = trapezoid_weights(times)
    integrand = 3.0 - 2.0 * times
    exact = 3.0 * (times[-1] - times[0]) - (times[-1] ** 2 - times[0] ** 2)
    assert float(weights @ integrand) == pytest.approx(exact, rel=1e-13)


def test_trapezoid_weights_reject_bad_nodes():
    with pytest.raises(DomainError):
        trapezoid_weights([0.5])
    with pytest.raises(DomainError):
        trapezoid_weights([0.5, 0.5])


def test_clean_observations_equal_trace(expansion, a_star):
    observations = make_observations(expansion, a_star, m=40, horizon=1.0, delta=0.0, seed=123)
    assert np.array_equal(observations.values, trace_at_center(expansion, a_star, observations.times))
    np.testing.assert_allclose(observations.times, np.arange(1, 41) / 40.0, rtol=1e-15)
    assert observations.times[0] > 0.0


def test_noise_is_bounded_by_scaled_level(expansion, a_star):
    observations = make_observations(expansion, a_star, m=60, horizon=1.0, delta=0.5, seed=4)
    clean = trace_at_center(expansion, a_star, observations.times)
    bound = 0.5 / observations.signal_norm
    assert np.all(np.abs(observations.values - clean) < bound)
    assert np.any(observations.values != clean)


def test_noise_is_reproducible(expansion, a_star):
    first = make_observations(expansion, a_star, m=30, delta=0.5, seed=11)
    second = make_observations(expansion, a_star, m=30, delta=0.5, seed=11)
    other = make_observations(expansion, a_star, m=30, delta=0.5, seed=12)
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)


def test_degenerate_signal_rejects_noise(a_star):
    zero = SpectralExpansion.from_coefficients([0.0])
    with pytest.raises(DegenerateSignalError):
        make_observations(zero, a_star, m=10, delta=0.1)
    assert np.all(make_observations(zero, a_star, m=10, delta=0.0).values == 0.0)


def test_observation_set_is_read_only(clean_observations):
    with pytest.raises(ValueError):
        clean_observations.values[0] = 1.0


def test_loaded_weights_are_recomputed(caplog):
    times = np.array([0.25, 0.5, 1.0])
    observations = ObservationSet.from_table(times, np.zeros(3), np.ones(3))
    np.testing.assert_allclose(observations.weights, trapezoid_weights(times))
    assert "differ" in caplog.text


def test_discrepancy_vanishes_at_truth(clean_model, a_star):
    assert clean_model.discrepancy(a_star) <= 1e-20
    assert np.all(clean_model.residual_vector(a_star) == 0.0)


def test_two_node_discrepancy(expansion, a_star):
    times = np.array([0.5, 1.0])
    weights = trapezoid_weights(times)
    values = np.array([0.1, -0.2])
    model = ResidualModel(ObservationSet(times, weights, values), expansion)
    r = trace_at_center(expansion, a_star, times) - values
    expected = 0.5 * (weights[0] * r[0] ** 2 + weights[1] * r[1] ** 2)
    assert model.discrepancy(a_star) == pytest.approx(expected, rel=1e-14)


def test_half_squared_residual_is_discrepancy(noisy_observations, expansion, box):
    model = ResidualModel(noisy_observations, expansion, box)
    for point in box.sample(np.random.default_rng(5), 20):
        r = model.residual_vector(point)
        assert 0.5 * float(r @ r) == pytest.approx(model.discrepancy(point), rel=1e-15)


def test_objective_adds_tikhonov_term(clean_model, a_star):
    assert clean_model.objective(a_star) == pytest.approx(0.5 * 1e-7 * (0.16 + 0.36 + 1.44), rel=1e-12)
    unregularized = clean_model.with_lambda(0.0)
    point = FractionalTriple(0.3, 0.9, 1.0)
    assert unregularized.objective(point) == unregularized.discrepancy(point)
    assert clean_model.objective(point) >= clean_model.discrepancy(point)


def test_discrepancy_swap_invariance(noisy_observations, expansion):
    model = ResidualModel(noisy_observations, expansion)
    point = FractionalTriple(0.35, 1.4, 0.7)
    assert model.discrepancy(point) == model.discrepancy(point.swapped())


def test_model_rejects_negative_lambda(clean_observations, expansion):
    with pytest.raises(DomainError):
        ResidualModel(clean_observations, expansion, lam=-1.0)
    with pytest.raises(DomainError):
        ResidualModel(clean_observations, expansion, fd_steps=(1e-7, 0.0, 1e-7))


def test_fd_jacobian_of_zero_expansion_is_zero(a_star):
    zero = SpectralExpansion.from_coefficients([0.0, 0.0, 0.0])
    observations = make_observations(zero, a_star, m=20)
    model = ResidualModel(observations, zero)
    assert np.all(model.jacobian_fd(a_star) == 0.0)


def test_fd_jacobian_swap_symmetry(clean_model):
    point = FractionalTriple(0.45, 0.8, 1.3)
    direct = clean_model.jacobian_fd(point)
    swapped = clean_model.jacobian_fd(point.swapped())
    np.testing.assert_allclose(direct[:, 1], swapped[:, 2], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(direct[:, 2], swapped[:, 1], rtol=1e-12, atol=1e-14)


def test_fd_step_outside_domain(clean_model):
    near_edge = FractionalTriple(1.0 - 5e-8, 0.6, 1.2)
    with pytest.raises(StepOutOfDomainError):
        clean_model.jacobian_fd(near_edge)


def test_analytic_columns_single_mode(a_star):
    single = SpectralExpansion.from_coefficients([1.0])
    observations = make_observations(single, a_star, m=25)
    model = ResidualModel(observations, single)
    tb = observations.times**a_star.beta
    p = np.pi / 2.0
    slope = mittag_leffler_deriv(a_star.beta, 1.0, -mu(1, a_star) * tb)
    expected_alpha = -tb * p**a_star.alpha * np.log(p) * slope * np.sqrt(observations.weights)
    columns = model.jacobian_analytic_space(a_star)
    np.testing.assert_allclose(columns[:, 0], expected_alpha, rtol=1e-12)


def test_analytic_columns_coincide_when_orders_coincide(clean_model):
    columns = clean_model.jacobian_analytic_space(FractionalTriple(0.4, 0.9, 0.9))
    assert np.array_equal(columns[:, 0], columns[:, 1])


def test_fd_matches_analytic_columns_at_truth(clean_model, a_star):
    fd = clean_model.jacobian_fd(a_star)
    exact = clean_model.jacobian_analytic_space(a_star)
    assert _column_error(fd[:, 1], exact[:, 0]) <= 1e-4
    assert _column_error(fd[:, 2], exact[:, 1]) <= 1e-4


def test_fd_matches_analytic_columns_on_random_interior_points(clean_model):
    interior = ParameterBox(0.1, 0.9, 0.2, 1.8, 0.2, 1.8)
    for point in interior.sample(np.random.default_rng(9), 10):
        fd = clean_model.jacobian_fd(point)
        exact = clean_model.jacobian_analytic_space(point)
        assert _column_error(fd[:, 1], exact[:, 0]) <= 1e-4
        assert _column_error(fd[:, 2], exact[:, 1]) <= 1e-4


def test_discrepancy_continuity(noisy_observations, expansion):
    model = ResidualModel(noisy_observations, expansion)
    rng = np.random.default_rng(21)
    box = ParameterBox(0.3, 0.5, 0.5, 0.7, 1.1, 1.3)
    small, large = [], []
    for point in box.sample(rng, 8):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        base = model.discrepancy(point)
        for scale, bucket in ((0.01, small), (0.1, large)):
            moved = FractionalTriple.from_array(point.as_array() + scale * direction)
            bucket.append(abs(model.discrepancy(moved) - base) / scale)
    assert max(small) <= 2.0 * max(large)
