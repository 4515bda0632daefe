from __future__ import annotations

import numpy as np
import pytest

from fracdiff.services.errors import DomainError
from fracdiff.services.inverse_objective import ResidualModel, make_observations
from fracdiff.services.regularization_sweep import (
    DEFAULT_MOROZOV_TAU,
    SweepEntry,
    SweepResult,
    dyadic_grid,
    morozov_select,
    reconstruction_errors,
    sweep,
    truncation_study,
)
from fracdiff.services.spectral_forward import FractionalTriple, example1_initial_condition, example2_initial_condition
from fracdiff.services.trust_region_solver import EstimateReport, TrustRegionConfig, estimate


def _report(discrepancy: float, lam: float) -> EstimateReport:
    a = FractionalTriple(0.4, 0.6, 1.2)
    return EstimateReport(
        a_final=a,
        a_raw=a,
        discrepancy=discrepancy,
        objective=discrepancy,
        lam=lam,
        reason="gradient",
        converged=True,
        iterations=1,
        accepted_iterations=1,
        grad_norm=0.0,
        history=(),
        wall_time=0.0,
    )


def _entries(pairs):
    return [SweepEntry(lam, _report(value, lam)) for lam, value in pairs]


SHORT_RUN = TrustRegionConfig(max_iters=15)
SYNTHETIC = _entries([(1.0, 0.5), (0.5, 0.2), (0.25, 0.05), (0.125, 0.01), (0.0625, 0.008)])


def test_dyadic_grid():
    grid = dyadic_grid()
    assert grid.size == 13
    assert grid[0] == 1.0
    assert grid[-1] == 2.0**-12
    assert np.all(np.diff(grid) < 0.0)
    with pytest.raises(DomainError):
        dyadic_grid(-3, 0)


def test_morozov_picks_largest_admissible_lambda():
    selection = morozov_select(SYNTHETIC, 0.06)
    assert selection.lam == 0.25
    assert not selection.flagged
    assert morozov_select(SYNTHETIC, 0.5).lam == 1.0


def test_morozov_selection_is_monotone_in_epsilon():
    previous = 0.0
    for epsilon in (0.009, 0.01, 0.05, 0.3, 1.0):
        selected = morozov_select(SYNTHETIC, epsilon).lam
        assert selected >= previous
        previous = selected


def test_morozov_fallback_is_flagged():
    selection = morozov_select(SYNTHETIC, 0.0)
    assert selection.flagged
    assert selection.lam == 0.0625
    with pytest.raises(DomainError):
        morozov_select(SYNTHETIC, -1.0)
    with pytest.raises(DomainError):
        morozov_select([], 0.1)


def test_morozov_safety_factor_scales_the_bound():
    assert morozov_select(SYNTHETIC, 0.05).lam == 0.25
    selection = morozov_select(SYNTHETIC, 0.05, tau=2.0)
    assert selection.lam == 0.5
    assert selection.tau == 2.0
    assert not selection.flagged
    with pytest.raises(DomainError):
        morozov_select(SYNTHETIC, 0.05, tau=0.9)


def test_sweep_result_requires_decreasing_lambdas():
    with pytest.raises(DomainError):
        SweepResult(tuple(_entries([(0.5, 0.1), (1.0, 0.2)])))
    result = SweepResult(tuple(SYNTHETIC), 0.06, morozov_select(SYNTHETIC, 0.06))
    assert result.selected_lambda == 0.25
    np.testing.assert_array_equal(result.discrepancies, [0.5, 0.2, 0.05, 0.01, 0.008])


def test_sweep_rejects_bad_grid(clean_model, example1_start):
    with pytest.raises(DomainError):
        sweep(clean_model, [0.25, 0.5], example1_start)
    with pytest.raises(DomainError):
        sweep(clean_model, [], example1_start)


def test_warm_sweep_on_clean_data(clean_model, example1_start):
    grid = [1.0, 0.25, 1.0 / 16.0]
    result = sweep(clean_model, grid, example1_start, SHORT_RUN, epsilon=1e-3)
    assert result.warm_start
    np.testing.assert_array_equal(result.lambdas, grid)
    assert result.discrepancies[-1] <= result.discrepancies[0]
    assert result.selection is not None
    assert result.selection.epsilon == 1e-3


def test_warm_sweep_is_deterministic(clean_model, example1_start):
    grid = [0.5, 0.125]
    first = sweep(clean_model, grid, example1_start, SHORT_RUN)
    second = sweep(clean_model, grid, example1_start, SHORT_RUN)
    assert [entry.a_lambda for entry in first.entries] == [entry.a_lambda for entry in second.entries]


def test_cold_sweep_entries_match_independent_runs(clean_model, example1_start):
    grid = [0.5, 0.125]
    result = sweep(clean_model, grid, example1_start, SHORT_RUN, warm_start=False, workers=2)
    assert not result.warm_start
    for entry in result.entries:
        alone = estimate(clean_model.with_lambda(entry.lam), example1_start, SHORT_RUN)
        assert entry.a_lambda == alone.a_final
        assert entry.report.lam == entry.lam


@pytest.mark.slow
def test_warm_and_cold_sweeps_agree(clean_model, example1_start):
    grid = [1.0, 0.25, 1.0 / 16.0]
    warm = sweep(clean_model, grid, example1_start)
    cold = sweep(clean_model, grid, example1_start, warm_start=False, workers=3)
    for left, right in zip(warm.entries, cold.entries):
        assert left.converged and right.converged
        np.testing.assert_allclose(left.a_lambda.as_array(), right.a_lambda.as_array(), atol=1e-4)


def test_truncation_study_structure(a_star, example1_start):
    study = truncation_study(
        example1_initial_condition,
        a_star,
        [5, 10],
        0.0,
        SHORT_RUN,
        a0=example1_start,
        observations=40,
    )
    assert study.reference.truncation == 40
    assert [level.truncation for level in study.levels] == [5, 10]
    assert all(level.report is not None for level in study.levels)
    errors = reconstruction_errors(study)
    assert errors.shape == (2, 40)
    assert np.max(errors) <= 1e-8


def test_truncation_errors_shrink_with_more_modes(a_star, example1_start):
    study = truncation_study(
        example2_initial_condition,
        a_star,
        [1, 3, 9],
        0.0,
        TrustRegionConfig(max_iters=2),
        a0=example1_start,
        observations=40,
        quad_tol=1e-8,
    )
    worst = np.max(reconstruction_errors(study), axis=1)
    assert worst[0] > worst[1] > worst[2]


def test_truncation_study_rejects_bad_levels(a_star, example1_start):
    with pytest.raises(DomainError):
        truncation_study(example1_initial_condition, a_star, [10, 5], a0=example1_start)
    with pytest.raises(DomainError):
        truncation_study(example1_initial_condition, a_star, [], a0=example1_start)


@pytest.mark.slow
def test_example2_truncation_levels(a_star, example1_start):
    study = truncation_study(
        example2_initial_condition,
        a_star,
        [5, 10, 20, 40],
        0.0,
        TrustRegionConfig(),
        a0=example1_start,
    )
    assert study.reference.truncation == 160
    reports = [level.report for level in study.levels]
    assert all(report is not None for report in reports)
    for report in reports:
        assert abs(report.a_final.beta - a_star.beta) <= 0.02
        assert report.discrepancy <= 10.0 * 1e-7
    for report in reports[:2]:
        assert abs(report.a_final.alpha - report.a_final.gamma) < abs(a_star.alpha - a_star.gamma)
    errors = reconstruction_errors(study)
    assert np.all(np.diff(np.max(errors, axis=1)) < 0.0)
    assert np.all(np.argmax(errors, axis=1) < errors.shape[1] // 4)


@pytest.mark.slow
def test_noisy_sweep_flattens_and_selects_near_one_sixty_fourth(expansion, a_star, box, example1_start):
    noiseless = ResidualModel(make_observations(expansion, a_star, m=200, delta=0.0), expansion, box, 1e-7)
    floor = estimate(noiseless, example1_start).discrepancy
    grid = dyadic_grid()
    near = 0
    for seed in range(10):
        observations = make_observations(expansion, a_star, m=200, delta=0.5, seed=seed)
        model = ResidualModel(observations, expansion, box)
        epsilon = model.discrepancy(a_star)
        result = sweep(model, grid, example1_start, TrustRegionConfig(), epsilon=epsilon, tau=DEFAULT_MOROZOV_TAU)
        tail = result.discrepancies[-3:]
        assert np.max(tail) <= 1.1 * np.min(tail)
        assert result.discrepancies[0] > result.discrepancies[-1]
        assert np.min(result.discrepancies) > 1e3 * floor
        if 2.0**-7 <= result.selected_lambda <= 2.0**-5:
            near += 1
    assert near >= 6
