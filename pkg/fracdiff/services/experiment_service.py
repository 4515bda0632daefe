"""Pipeline orchestration: forward runs, observations, estimates and the reproduction presets."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..config import RunConfig, resolve_threads
from ..repository import ArtifactRepository, history_frame, observations_from_frame, read_table
from .inverse_objective import ObservationSet, ResidualModel, make_observations
from .mittag_leffler import MlQuery, ml, ml_deriv
from .regularization_sweep import (
    SweepResult,
    TruncationStudy,
    dyadic_grid,
    reconstruction_errors,
    sweep,
    truncation_study,
)
from .spectral_forward import (
    BUILTIN_INITIAL_CONDITIONS,
    FractionalTriple,
    InitialCondition,
    SpectralExpansion,
    example1_expansion,
    expand,
    expand_auto,
    solution,
    trace_at_center,
)
from .trust_region_solver import EstimateReport, best_report, multistart

logger = logging.getLogger(__name__)

NOISE_NORMALIZATION = "delta/||u(a*)||_L2(0,T), trapezoid over observation nodes"
EXAMPLE1_OVERRIDES = {
    "initial_condition": "example1",
    "a_star": "0.4, 0.6, 1.2",
    "horizon": "1.0",
    "lambda": "1e-7",
}
EXAMPLE2_OVERRIDES = {
    "initial_condition": "example2",
    "a_star": "0.4, 0.6, 1.2",
    "horizon": "1.0",
    "quad_tol": "1e-8",
}


@dataclass(frozen=True, slots=True)
class EstimateOutcome:
    report: EstimateReport
    starts: tuple[EstimateReport, ...]
    model: ResidualModel


class ExperimentService:
    """Business logic behind every command-line subcommand."""

    def __init__(
        self,
        config: RunConfig,
        repository: ArtifactRepository | None = None,
        workers: int | None = None,
    ):
        self.config = config
        self.repository = repository or ArtifactRepository(config.output_dir or None)
        self.workers = workers or resolve_threads()

    # -- building blocks -------------------------------------------------

    @staticmethod
    def evaluate_ml(beta: float, nu: float, z: float, deriv: bool = False) -> float:
        query = MlQuery(beta, nu, z)
        return ml_deriv(query) if deriv else ml(query)

    def initial_condition(self) -> InitialCondition:
        condition = self.config.initial_condition
        if isinstance(condition, str):
            return BUILTIN_INITIAL_CONDITIONS[condition]
        expansion = SpectralExpansion.from_coefficients(condition)

        def from_coefficients(x: float) -> float:
            return float(solution(expansion, self.config.a_star, 0.0, x))

        return from_coefficients

    def build_expansion(self, truncation: int | None = None) -> SpectralExpansion:
        count = truncation if truncation is not None else self.config.truncation
        condition = self.config.initial_condition
        if condition == "example1" or not isinstance(condition, str):
            exact = example1_expansion() if condition == "example1" else SpectralExpansion.from_coefficients(condition)
            return exact.truncated(count) if count is not None else exact
        f = BUILTIN_INITIAL_CONDITIONS[condition]
        if count is None:
            return expand_auto(f, self.config.quad_tol)
        return expand(f, count, self.config.quad_tol)

    def build_model(
        self, observations: ObservationSet, expansion: SpectralExpansion | None = None, lam: float | None = None
    ) -> ResidualModel:
        return ResidualModel(
            observations,
            expansion or self.build_expansion(),
            self.config.box,
            self.config.lam if lam is None else lam,
            self.config.fd_steps,
        )

    def synthesize(self, expansion: SpectralExpansion | None = None) -> ObservationSet:
        cfg = self.config
        return make_observations(
            expansion or self.build_expansion(), cfg.a_star, cfg.observations, cfg.horizon, cfg.delta, cfg.seed
        )

    @staticmethod
    def load_observations(path: str | Path) -> ObservationSet:
        return observations_from_frame(read_table(path))

    def metadata(self) -> dict[str, object]:
        return {
            "a_star": self.config.a_star.format(),
            "noise_normalization": NOISE_NORMALIZATION,
        }

    # -- subcommands -----------------------------------------------------

    def forward(self, out: str | Path, x_points: int | None = None) -> pd.DataFrame:
        """u(a*) on the observation times plus t = 0, at x = 0 or on a uniform x grid."""
        cfg = self.config
        expansion = self.build_expansion()
        times = cfg.horizon * np.arange(0, cfg.observations + 1, dtype=float) / cfg.observations
        if x_points:
            xs = np.linspace(-1.0, 1.0, x_points)
            grid = np.asarray(solution(expansion, cfg.a_star, times, xs))
            frame = pd.DataFrame(
                {"t": np.repeat(times, xs.size), "x": np.tile(xs, times.size), "u": grid.ravel()}
            )
        else:
            frame = pd.DataFrame({"t": times, "u_center": trace_at_center(expansion, cfg.a_star, times)})
        target = self.repository.write_table(out, frame)
        self.repository.write_config_echo(target, cfg)
        return frame

    def observe(self, out: str | Path) -> ObservationSet:
        observations = self.synthesize()
        target = self.repository.write_observations(out, observations)
        self.repository.write_config_echo(target, self.config)
        logger.info("Signal norm %.6g, noise level %g, seed %d", observations.signal_norm, self.config.delta, self.config.seed)
        return observations

    def estimate(
        self,
        observations: ObservationSet,
        out: str | Path | None = None,
        trace_out: str | Path | None = None,
        expansion: SpectralExpansion | None = None,
    ) -> EstimateOutcome:
        cfg = self.config
        model = self.build_model(observations, expansion)
        starts = [cfg.a0]
        if cfg.starts > 1:
            starts.extend(cfg.box.sample(np.random.default_rng(cfg.seed), cfg.starts - 1))
        reports = multistart(model, starts, cfg.solver, self.workers)
        report = best_report(reports)
        if out is not None:
            extra = dict(self.metadata())
            extra.update(
                {
                    "observations": observations.size,
                    "truncation": model.expansion.truncation,
                    "starts": len(reports),
                }
            )
            target = self.repository.write_report(out, report, extra)
            self.repository.write_config_echo(target, cfg)
            if len(reports) > 1:
                self.repository.write_table(f"{out}.starts.csv", starts_frame(starts, reports))
        if trace_out is not None:
            self.repository.write_table(trace_out, history_frame(report.history))
        return EstimateOutcome(report, tuple(reports), model)

    def realized_noise(self, model: ResidualModel) -> float:
        """I(a*) on the given data: the known noise level of a synthetic experiment."""
        return model.with_lambda(0.0).discrepancy(self.config.a_star)

    def sweep(
        self,
        observations: ObservationSet,
        lambdas: Sequence[float] | None = None,
        out: str | Path | None = None,
        cold: bool = False,
        expansion: SpectralExpansion | None = None,
    ) -> SweepResult:
        model = self.build_model(observations, expansion)
        epsilon = self.config.epsilon
        if epsilon is None:
            epsilon = self.realized_noise(model)
            logger.info("Using realized noise level I(a*)=%.6g as epsilon", epsilon)
        grid = dyadic_grid(0, -12) if lambdas is None else np.asarray(lambdas, dtype=float)
        result = sweep(
            model,
            grid,
            self.config.a0,
            self.config.solver,
            warm_start=not cold,
            workers=self.workers,
            epsilon=epsilon,
            tau=self.config.morozov_tau,
        )
        if out is not None:
            target = self.repository.write_table(out, sweep_frame(result))
            self.repository.write_config_echo(target, self.config)
        return result

    def truncation(
        self, levels: Sequence[int] | None = None, out: str | Path | None = None, errors_out: str | Path | None = None
    ) -> TruncationStudy:
        cfg = self.config
        study = truncation_study(
            self.initial_condition(),
            cfg.a_star,
            levels or cfg.levels,
            cfg.delta,
            cfg.solver,
            a0=cfg.a0,
            lam=cfg.lam,
            observations=cfg.observations,
            horizon=cfg.horizon,
            quad_tol=cfg.quad_tol,
            seed=cfg.seed,
            box=cfg.box,
            fd_steps=cfg.fd_steps,
        )
        if out is not None:
            target = self.repository.write_table(out, truncation_frame(study))
            self.repository.write_config_echo(target, cfg)
        if errors_out is not None:
            self.repository.write_table(errors_out, errors_frame(study))
        return study

    # -- reproduction presets ----------------------------------------------

    def residual_curves(self, model: ResidualModel, report: EstimateReport) -> pd.DataFrame:
        """phi(t) - u(a_k)(t, 0) for every distinct iterate of a run."""
        points: dict[tuple[float, float, float], None] = {}
        for record in report.history:
            points.setdefault((record.beta, record.alpha, record.gamma), None)
        raw = report.a_raw
        points.setdefault((raw.beta, raw.alpha, raw.gamma), None)
        observations = model.observations
        columns: dict[str, np.ndarray] = {"t": observations.times, "phi": observations.values}
        for index, point in enumerate(points):
            columns[f"iterate_{index}"] = observations.values - model.trace(FractionalTriple(*point))
        return pd.DataFrame(columns)

    @staticmethod
    def reconstructions(model: ResidualModel, result: SweepResult) -> pd.DataFrame:
        observations = model.observations
        columns: dict[str, np.ndarray] = {"t": observations.times, "phi": observations.values}
        for entry in result.entries:
            columns[f"lambda_{entry.lam:.6g}"] = model.trace(entry.report.a_raw)
        return pd.DataFrame(columns)


def starts_frame(starts: Sequence[FractionalTriple], reports: Sequence[EstimateReport]) -> pd.DataFrame:
    rows = [
        (
            index,
            start.beta,
            start.alpha,
            start.gamma,
            report.a_final.beta,
            report.a_final.alpha,
            report.a_final.gamma,
            report.discrepancy,
            report.objective,
            report.iterations,
            report.accepted_iterations,
            report.converged,
        )
        for index, (start, report) in enumerate(zip(starts, reports))
    ]
    return pd.DataFrame(
        rows,
        columns=[
            "start",
            "beta0",
            "alpha0",
            "gamma0",
            "beta",
            "alpha",
            "gamma",
            "I",
            "F",
            "iterations",
            "accepted",
            "converged",
        ],
    )


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    selected = result.selected_lambda
    rows = [
        (
            entry.lam,
            entry.a_lambda.beta,
            entry.a_lambda.alpha,
            entry.a_lambda.gamma,
            entry.discrepancy,
            entry.converged,
            selected is not None and entry.lam == selected,
        )
        for entry in result.entries
    ]
    return pd.DataFrame(rows, columns=["lambda", "beta", "alpha", "gamma", "I", "converged", "selected"])


def truncation_frame(study: TruncationStudy) -> pd.DataFrame:
    rows = []
    for level in study.levels:
        if level.report is None:
            rows.append((level.truncation, math.nan, math.nan, math.nan, math.nan, False))
            continue
        a = level.report.a_final
        rows.append((level.truncation, a.beta, a.alpha, a.gamma, level.report.discrepancy, level.report.converged))
    return pd.DataFrame(rows, columns=["N", "beta", "alpha", "gamma", "I", "converged"])


def errors_frame(study: TruncationStudy) -> pd.DataFrame:
    grid = reconstruction_errors(study)
    columns: dict[str, np.ndarray] = {"t": study.observations.times}
    for level, row in zip(study.levels, grid):
        columns[f"N_{level.truncation}"] = row
    return pd.DataFrame(columns)


def run_example1(
    config: RunConfig,
    delta: float = 0.0,
    seed: int = 0,
    repository: ArtifactRepository | None = None,
    prefix: str = "example1",
) -> EstimateReport:
    """Example 1: f = psi_1 + psi_5 / 2, a* = (0.4, 0.6, 1.2).

    The noiseless run estimates once at lambda = 1e-7. With noise the dyadic
    lambda sweep runs and the report holds the Morozov-selected estimate.
    """
    overrides = dict(EXAMPLE1_OVERRIDES, delta=repr(float(delta)), seed=str(seed))
    service = ExperimentService(config.with_overrides(overrides), repository)
    repo = service.repository
    expansion = example1_expansion()
    observations = service.synthesize(expansion)
    repo.write_observations(f"{prefix}.observations.csv", observations)

    if delta == 0.0:
        outcome = service.estimate(
            observations, f"{prefix}.report", f"{prefix}.trace.csv", expansion=expansion
        )
        repo.write_table(f"{prefix}.residuals.csv", service.residual_curves(outcome.model, outcome.report))
        return outcome.report

    result = service.sweep(observations, out=f"{prefix}.sweep.csv", expansion=expansion)
    model = service.build_model(observations, expansion)
    repo.write_table(f"{prefix}.reconstructions.csv", service.reconstructions(model, result))
    chosen = next(entry for entry in result.entries if entry.lam == result.selected_lambda)
    extra = dict(service.metadata())
    extra.update(
        {
            "epsilon": result.epsilon,
            "morozov_tau": service.config.morozov_tau,
            "selected_lambda": result.selected_lambda,
            "selection_flagged": result.selection.flagged if result.selection else False,
            "delta": delta,
            "seed": seed,
        }
    )
    target = repo.write_report(f"{prefix}.report", chosen.report, extra)
    repo.write_config_echo(target, service.config)
    return chosen.report


def run_example2(
    config: RunConfig,
    levels: Sequence[int] | None = None,
    repository: ArtifactRepository | None = None,
    prefix: str = "example2",
) -> pd.DataFrame:
    """Example 2: f = exp(-x^2) - exp(-1) projected by quadrature, studied over truncation levels."""
    service = ExperimentService(config.with_overrides(EXAMPLE2_OVERRIDES), repository)
    study = service.truncation(levels, f"{prefix}.truncation.csv", f"{prefix}.errors.csv")
    return truncation_frame(study)
