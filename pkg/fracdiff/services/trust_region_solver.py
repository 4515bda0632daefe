"""Box-constrained trust-region least squares with a Levenberg-Marquardt model."""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, NumericalError
from .inverse_objective import ResidualModel, StepOutOfDomainError
from .spectral_forward import FractionalTriple

logger = logging.getLogger(__name__)

LAMBDA_ZERO_FLOOR = 1e-12
MAX_PROJECTION_ROUNDS = 3
KKT_RTOL = 1e-9
BOUNDARY_RTOL = 1e-12
FD_SHRINK_ATTEMPTS = 6

CONVERGED_REASONS = frozenset({"gradient", "step_tolerance", "function_tolerance"})


class SingularSubproblemError(NumericalError):
    """Raised when the reduced model Hessian cannot be factorised."""


@dataclass(frozen=True, slots=True)
class TrustRegionConfig:
    radius0: float = 0.5
    radius_max: float = 1.0
    eta: float = 0.125
    max_iters: int = 100
    grad_tol: float = 1e-8
    xtol: float = 1e-12
    ftol: float = 1e-15

    def __post_init__(self) -> None:
        if not 0.0 < self.radius0 <= self.radius_max:
            raise DomainError("radii must satisfy 0 < radius0 <= radius_max")
        if not 0.0 <= self.eta < 0.25:
            raise DomainError(f"eta must lie in [0, 0.25), got {self.eta!r}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be at least 1, got {self.max_iters!r}")
        if not self.grad_tol > 0.0:
            raise DomainError(f"grad_tol must be positive, got {self.grad_tol!r}")
        if self.xtol < 0.0 or self.ftol < 0.0:
            raise DomainError("xtol and ftol must be non-negative")


@dataclass(frozen=True, slots=True)
class IterationRecord:
    iteration: int
    objective: float
    discrepancy: float
    grad_norm: float
    radius: float
    rho: float
    beta: float
    alpha: float
    gamma: float
    accepted: bool
    radius_next: float


@dataclass(slots=True)
class TrustRegionState:
    point: NDArray[np.float64]
    radius: float
    objective: float
    discrepancy: float
    residual: NDArray[np.float64]
    jacobian: NDArray[np.float64]
    rho: float = math.nan
    step: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    accepted: bool = False
    reduction: float = math.nan
    iteration: int = 0
    accepted_count: int = 0
    history: list[IterationRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, model: ResidualModel, a0: FractionalTriple, config: TrustRegionConfig) -> TrustRegionState:
        residual = model.residual_vector(a0)
        discrepancy = 0.5 * float(residual @ residual)
        return cls(
            point=a0.as_array(),
            radius=config.radius0,
            objective=discrepancy + model.penalty(a0),
            discrepancy=discrepancy,
            residual=residual,
            jacobian=_jacobian(model, a0, residual),
        )

    @property
    def iterate(self) -> FractionalTriple:
        return FractionalTriple.from_array(self.point)


@dataclass(frozen=True, slots=True)
class EstimateReport:
    a_final: FractionalTriple
    a_raw: FractionalTriple
    discrepancy: float
    objective: float
    lam: float
    reason: str
    converged: bool
    iterations: int
    accepted_iterations: int
    grad_norm: float
    history: tuple[IterationRecord, ...]
    wall_time: float
    metadata: dict[str, Any] = field(default_factory=dict)


def model_value(g: ArrayLike, B: ArrayLike, p: ArrayLike, objective: float = 0.0) -> float:
    """m(p) = F + g.p + p.B.p / 2."""
    g_arr = np.asarray(g, dtype=float)
    b_arr = np.asarray(B, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    return float(objective + g_arr @ p_arr + 0.5 * p_arr @ b_arr @ p_arr)


def lm_model(
    residual: NDArray[np.float64], jacobian: NDArray[np.float64], point: NDArray[np.float64], lam: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gradient J^T r + lam a and Gauss-Newton Hessian J^T J + lam I."""
    g = jacobian.T @ residual + lam * point
    shift = lam if lam > 0.0 else LAMBDA_ZERO_FLOOR
    B = jacobian.T @ jacobian + shift * np.eye(point.size)
    return g, B


def step_bounds(
    point: NDArray[np.float64], lower: NDArray[np.float64], upper: NDArray[np.float64], radius: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Intersection of the infinity-norm ball with the shifted parameter box."""
    return np.maximum(lower - point, -radius), np.minimum(upper - point, radius)


def solve_subproblem(
    g: ArrayLike, B: ArrayLike, lower: ArrayLike, upper: ArrayLike
) -> NDArray[np.float64]:
    """Minimise the quadratic model over the step box by repeated projection.

    The unconstrained minimiser is projected onto the box; every component that
    had to be clamped is fixed and the remaining coordinates are re-minimised.
    A result violating the KKT conditions is replaced by the exact face-by-face
    minimiser.
    """
    g_arr = np.asarray(g, dtype=float)
    b_arr = np.asarray(B, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(lo > hi) or np.any(lo > 0.0) or np.any(hi < 0.0):
        raise DomainError("step bounds must contain the zero step")

    p = np.zeros_like(g_arr)
    free = np.ones(g_arr.size, dtype=bool)
    for _ in range(MAX_PROJECTION_ROUNDS):
        if not free.any():
            break
        trial = p.copy()
        trial[free] = _reduced_minimizer(g_arr, b_arr, p, free)
        clipped = np.clip(trial, lo, hi)
        violators = free & (clipped != trial)
        p = clipped
        if not violators.any():
            break
        free &= ~violators

    if not _satisfies_kkt(g_arr, b_arr, p, lo, hi):
        logger.debug("Projected step fails the KKT test; solving over all active faces")
        p = _face_minimizer(g_arr, b_arr, lo, hi)
    return p


def _reduced_minimizer(
    g: NDArray[np.float64], B: NDArray[np.float64], p: NDArray[np.float64], free: NDArray[np.bool_]
) -> NDArray[np.float64]:
    fixed = ~free
    rhs = -(g[free] + B[np.ix_(free, fixed)] @ p[fixed])
    try:
        return np.linalg.solve(B[np.ix_(free, free)], rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSubproblemError("reduced model Hessian is singular") from exc


def _satisfies_kkt(
    g: NDArray[np.float64],
    B: NDArray[np.float64],
    p: NDArray[np.float64],
    lo: NDArray[np.float64],
    hi: NDArray[np.float64],
) -> bool:
    gradient = g + B @ p
    scale = KKT_RTOL * max(1.0, float(np.max(np.abs(g))), float(np.max(np.abs(B @ p))))
    at_lower = p <= lo
    at_upper = p >= hi
    interior = ~(at_lower | at_upper)
    if np.any(np.abs(gradient[interior]) > scale):
        return False
    pinned = at_lower & at_upper
    if np.any(gradient[at_lower & ~pinned] < -scale):
        return False
    if np.any(gradient[at_upper & ~pinned] > scale):
        return False
    return True


def _face_minimizer(
    g: NDArray[np.float64], B: NDArray[np.float64], lo: NDArray[np.float64], hi: NDArray[np.float64]
) -> NDArray[np.float64]:
    best = np.zeros_like(g)
    best_value = 0.0
    for pattern in itertools.product((-1, 0, 1), repeat=g.size):
        choice = np.asarray(pattern)
        candidate = np.where(choice < 0, lo, np.where(choice > 0, hi, 0.0))
        free = choice == 0
        if free.any():
            candidate[free] = _reduced_minimizer(g, B, candidate, free)
            slack = BOUNDARY_RTOL * (1.0 + np.abs(candidate[free]))
            if np.any(candidate[free] < lo[free] - slack) or np.any(candidate[free] > hi[free] + slack):
                continue
            candidate = np.clip(candidate, lo, hi)
        value = model_value(g, B, candidate)
        if value < best_value:
            best, best_value = candidate, value
    return best


def update_radius(rho: float, radius: float, step_norm: float, config: TrustRegionConfig) -> float:
    """Quarter on poor agreement, double on a good boundary step, keep otherwise."""
    if rho < 0.25:
        return 0.25 * radius
    if rho > 0.75 and step_norm >= radius * (1.0 - BOUNDARY_RTOL):
        return min(2.0 * radius, config.radius_max)
    return radius


def projected_gradient_norm(
    point: NDArray[np.float64], gradient: NDArray[np.float64], model: ResidualModel
) -> float:
    projected = model.box.clip(point - gradient)
    return float(np.linalg.norm(projected - point))


def _jacobian(model: ResidualModel, a: FractionalTriple, residual: NDArray[np.float64]) -> NDArray[np.float64]:
    current = model
    for _ in range(FD_SHRINK_ATTEMPTS):
        try:
            return current.jacobian_fd(a, residual)
        except StepOutOfDomainError:
            steps = tuple(s / 10.0 for s in current.fd_steps)
            logger.debug("Shrinking finite-difference steps to %s at %s", steps, a.format())
            current = dataclasses.replace(current, fd_steps=steps)
    return current.jacobian_fd(a, residual)


def step(model: ResidualModel, state: TrustRegionState, config: TrustRegionConfig) -> TrustRegionState:
    """One trust-region iteration; ``state`` is updated in place and returned."""
    point = state.point
    g, B = lm_model(state.residual, state.jacobian, point, model.lam)
    grad_norm = projected_gradient_norm(point, g, model)
    lower, upper = step_bounds(point, model.box.lower, model.box.upper, state.radius)
    p = solve_subproblem(g, B, lower, upper)
    predicted = -(g @ p + 0.5 * p @ B @ p)

    trial_residual: NDArray[np.float64] | None = None
    trial_objective = math.nan
    trial_discrepancy = math.nan
    if predicted > 0.0:
        trial = FractionalTriple.from_array(model.box.clip(point + p))
        trial_residual = model.residual_vector(trial)
        trial_discrepancy = 0.5 * float(trial_residual @ trial_residual)
        trial_objective = trial_discrepancy + model.penalty(trial)
        rho = (state.objective - trial_objective) / predicted
    else:
        if np.any(p != 0.0):
            logger.warning("Model predicts no decrease (%.3g) for a nonzero step; rejecting", predicted)
        rho = 0.0

    step_norm = float(np.max(np.abs(p)))
    radius_next = update_radius(rho, state.radius, step_norm, config)
    accepted = rho > config.eta
    state.history.append(
        IterationRecord(
            iteration=state.iteration,
            objective=state.objective,
            discrepancy=state.discrepancy,
            grad_norm=grad_norm,
            radius=state.radius,
            rho=float(rho),
            beta=float(point[0]),
            alpha=float(point[1]),
            gamma=float(point[2]),
            accepted=accepted,
            radius_next=radius_next,
        )
    )
    logger.debug(
        "iter %d F=%.6e |g|=%.3e R=%.3g rho=%.4f %s",
        state.iteration,
        state.objective,
        grad_norm,
        state.radius,
        rho,
        "accepted" if accepted else "rejected",
    )

    state.iteration += 1
    state.rho = float(rho)
    state.step = p
    state.radius = radius_next
    state.accepted = accepted
    state.reduction = state.objective - trial_objective if accepted else 0.0
    if accepted and trial_residual is not None:
        new_point = model.box.clip(point + p)
        state.point = new_point
        state.residual = trial_residual
        state.objective = trial_objective
        state.discrepancy = trial_discrepancy
        state.jacobian = _jacobian(model, FractionalTriple.from_array(new_point), trial_residual)
        state.accepted_count += 1
    return state


def estimate(
    model: ResidualModel, a0: FractionalTriple, config: TrustRegionConfig | None = None
) -> EstimateReport:
    """Run trust-region iterations from ``a0`` until a termination test fires."""
    config = config or TrustRegionConfig()
    if not model.box.contains(a0):
        raise DomainError(f"initial guess {a0.format()} lies outside the parameter box")
    started = time.perf_counter()
    state = TrustRegionState.initial(model, a0, config)

    reason = "max_iterations"
    while True:
        g, _ = lm_model(state.residual, state.jacobian, state.point, model.lam)
        if projected_gradient_norm(state.point, g, model) <= config.grad_tol:
            reason = "gradient"
            break
        if state.iteration >= config.max_iters:
            break
        previous = state.objective
        step(model, state, config)
        if state.accepted:
            size = float(np.max(np.abs(state.step)))
            if size <= config.xtol * (config.xtol + float(np.max(np.abs(state.point)))):
                reason = "step_tolerance"
                break
            if state.reduction <= config.ftol * previous:
                reason = "function_tolerance"
                break
        elif state.radius < config.xtol:
            reason = "radius_collapse"
            break

    g, _ = lm_model(state.residual, state.jacobian, state.point, model.lam)
    final_grad = projected_gradient_norm(state.point, g, model)
    raw = state.iterate
    converged = reason in CONVERGED_REASONS
    report = EstimateReport(
        a_final=raw.canonical(),
        a_raw=raw,
        discrepancy=state.discrepancy,
        objective=state.objective,
        lam=model.lam,
        reason=reason,
        converged=converged,
        iterations=state.iteration,
        accepted_iterations=state.accepted_count,
        grad_norm=final_grad,
        history=tuple(state.history),
        wall_time=time.perf_counter() - started,
        metadata={"a0": a0.format()},
    )
    log = logger.info if converged else logger.warning
    log(
        "Estimate %s after %d iterations (%d accepted): a=%s I=%.6e reason=%s",
        "converged" if converged else "did not converge",
        report.iterations,
        report.accepted_iterations,
        report.a_final.format(),
        report.discrepancy,
        reason,
    )
    return report


def multistart(
    model: ResidualModel,
    starts: Sequence[FractionalTriple],
    config: TrustRegionConfig | None = None,
    workers: int = 1,
) -> list[EstimateReport]:
    """Independent estimates from each start, returned in start order."""
    if not starts:
        raise DomainError("at least one start is required")
    if workers <= 1 or len(starts) == 1:
        return [estimate(model, start, config) for start in starts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda start: estimate(model, start, config), starts))


def best_report(reports: Sequence[EstimateReport]) -> EstimateReport:
    return min(reports, key=lambda report: report.objective)
