"""Tikhonov parameter sweeps, Morozov selection and truncation studies."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, NumericalError
from .inverse_objective import DEFAULT_FD_STEP, ObservationSet, ResidualModel, make_observations
from .spectral_forward import (
    FractionalTriple,
    InitialCondition,
    ParameterBox,
    SpectralExpansion,
    expand,
    trace_at_center,
)
from .trust_region_solver import EstimateReport, TrustRegionConfig, estimate

logger = logging.getLogger(__name__)

REFERENCE_FACTOR = 4
# Safety factor on the residual norm for the Morozov bound in run configurations.
DEFAULT_MOROZOV_TAU = 1.1


def dyadic_grid(start: int = 0, stop: int = -12) -> NDArray[np.float64]:
    """2^start, 2^(start-1), ..., 2^stop."""
    if stop > start:
        raise DomainError(f"dyadic grid must decrease, got {start}..{stop}")
    return 2.0 ** np.arange(start, stop - 1, -1, dtype=float)


@dataclass(frozen=True, slots=True)
class SweepEntry:
    lam: float
    report: EstimateReport

    @property
    def a_lambda(self) -> FractionalTriple:
        return self.report.a_final

    @property
    def discrepancy(self) -> float:
        return self.report.discrepancy

    @property
    def converged(self) -> bool:
        return self.report.converged


@dataclass(frozen=True, slots=True)
class MorozovSelection:
    lam: float
    flagged: bool
    epsilon: float
    tau: float = 1.0


@dataclass(frozen=True, slots=True)
class SweepResult:
    entries: tuple[SweepEntry, ...]
    epsilon: float | None = None
    selection: MorozovSelection | None = None
    warm_start: bool = True

    def __post_init__(self) -> None:
        if not self.entries:
            raise DomainError("a sweep needs at least one entry")
        lambdas = [entry.lam for entry in self.entries]
        if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
            raise DomainError("sweep lambdas must be strictly decreasing")

    @property
    def lambdas(self) -> NDArray[np.float64]:
        return np.array([entry.lam for entry in self.entries], dtype=float)

    @property
    def discrepancies(self) -> NDArray[np.float64]:
        return np.array([entry.discrepancy for entry in self.entries], dtype=float)

    @property
    def selected_lambda(self) -> float | None:
        return None if self.selection is None else self.selection.lam


def _check_grid(lambdas: ArrayLike) -> list[float]:
    grid = [float(value) for value in np.asarray(lambdas, dtype=float).ravel()]
    if not grid:
        raise DomainError("lambda grid is empty")
    if any(value < 0.0 for value in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
        raise DomainError("lambda grid must be non-negative and strictly decreasing")
    return grid


def sweep(
    model: ResidualModel,
    lambdas: ArrayLike,
    a0: FractionalTriple,
    config: TrustRegionConfig | None = None,
    *,
    warm_start: bool = True,
    workers: int = 1,
    epsilon: float | None = None,
    tau: float = 1.0,
) -> SweepResult:
    """Estimate once per lambda; warm runs start from the previous raw minimiser."""
    grid = _check_grid(lambdas)
    entries: list[SweepEntry] = []
    if warm_start:
        start = a0
        for lam in grid:
            report = estimate(model.with_lambda(lam), start, config)
            entries.append(SweepEntry(lam, report))
            start = report.a_raw
    else:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            reports = list(pool.map(lambda lam: estimate(model.with_lambda(lam), a0, config), grid))
        entries = [SweepEntry(lam, report) for lam, report in zip(grid, reports)]

    for entry in entries:
        if not entry.converged:
            logger.warning("Sweep entry lambda=%g stopped without convergence (%s)", entry.lam, entry.report.reason)

    selection = None
    if epsilon is not None:
        selection = morozov_select(entries, epsilon, tau)
    logger.info("Swept %d lambdas (%s start)", len(entries), "warm" if warm_start else "cold")
    return SweepResult(tuple(entries), epsilon, selection, warm_start)


def morozov_select(
    result: SweepResult | Sequence[SweepEntry], epsilon: float, tau: float = 1.0
) -> MorozovSelection:
    """Largest lambda whose discrepancy stays within the noise level, else the closest one, flagged.

    ``tau`` scales the residual norm bound, so the admissible discrepancy is
    ``tau**2 * epsilon``; ``tau = 1`` is the plain principle.
    """
    entries = result.entries if isinstance(result, SweepResult) else tuple(result)
    if not entries:
        raise DomainError("no sweep entries to select from")
    if not (math.isfinite(epsilon) and epsilon >= 0.0):
        raise DomainError(f"epsilon must be a non-negative number, got {epsilon!r}")
    if not (math.isfinite(tau) and tau >= 1.0):
        raise DomainError(f"tau must be at least 1, got {tau!r}")
    level = tau * tau * epsilon
    ordered = sorted(entries, key=lambda entry: entry.lam, reverse=True)
    for entry in ordered:
        if entry.discrepancy <= level:
            return MorozovSelection(entry.lam, False, epsilon, tau)
    nearest = min(ordered, key=lambda entry: abs(entry.discrepancy - level))
    logger.warning(
        "No lambda reaches the noise level %.3g; falling back to lambda=%g (I=%.3g)",
        level,
        nearest.lam,
        nearest.discrepancy,
    )
    return MorozovSelection(nearest.lam, True, epsilon, tau)


@dataclass(frozen=True, slots=True)
class TruncationLevel:
    truncation: int
    report: EstimateReport | None
    error: str | None = None


@dataclass(frozen=True, slots=True, eq=False)
class TruncationStudy:
    levels: tuple[TruncationLevel, ...]
    reference: SpectralExpansion
    observations: ObservationSet
    a_star: FractionalTriple
    metadata: dict[str, object] = field(default_factory=dict)


def truncation_study(
    f: InitialCondition,
    a_star: FractionalTriple,
    levels: Sequence[int],
    delta: float = 0.0,
    config: TrustRegionConfig | None = None,
    *,
    a0: FractionalTriple,
    lam: float = 1e-7,
    observations: int = 200,
    horizon: float = 1.0,
    quad_tol: float = 1e-8,
    seed: int | None = 0,
    box: ParameterBox | None = None,
    fd_steps: tuple[float, float, float] = (DEFAULT_FD_STEP, DEFAULT_FD_STEP, DEFAULT_FD_STEP),
) -> TruncationStudy:
    """Estimate with N-term models against data from a 4 * max(N) reference expansion."""
    counts = [int(level) for level in levels]
    if not counts or counts[0] < 1 or any(b <= a for a, b in zip(counts, counts[1:])):
        raise DomainError(f"truncation levels must be positive and increasing, got {counts!r}")
    reference = expand(f, REFERENCE_FACTOR * counts[-1], quad_tol)
    data = make_observations(reference, a_star, observations, horizon, delta, seed)
    rows: list[TruncationLevel] = []
    for count in counts:
        model = ResidualModel(data, reference.truncated(count), box or ParameterBox(), lam, fd_steps)
        try:
            report = estimate(model, a0, config)
        except NumericalError as exc:
            logger.warning("Truncation level N=%d failed: %s", count, exc)
            rows.append(TruncationLevel(count, None, str(exc)))
            continue
        rows.append(TruncationLevel(count, report))
    return TruncationStudy(
        tuple(rows),
        reference,
        data,
        a_star,
        {"reference_truncation": reference.truncation, "delta": delta, "lambda": lam},
    )


def reconstruction_errors(study: TruncationStudy) -> NDArray[np.float64]:
    """|u_N(a*)(t, 0) - phi(t)| per level (rows) and observation time (columns)."""
    times = study.observations.times
    rows = [
        np.abs(trace_at_center(study.reference.truncated(level.truncation), study.a_star, times) - study.observations.values)
        for level in study.levels
    ]
    return np.vstack(rows)
