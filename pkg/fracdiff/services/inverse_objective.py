"""Observation data, discrepancy functional and Jacobians for the inverse problem."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, NumericalError
from .mittag_leffler import mittag_leffler_deriv
from .spectral_forward import FractionalTriple, ParameterBox, SpectralExpansion, mu, trace_at_center

logger = logging.getLogger(__name__)

DEFAULT_FD_STEP = 1e-7
DEFAULT_OBSERVATIONS = 200
DEFAULT_HORIZON = 1.0


class DegenerateSignalError(NumericalError):
    """Raised when noise is requested for an identically zero signal."""


class StepOutOfDomainError(NumericalError):
    """Raised when a finite-difference step leaves the open parameter domain."""


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    array = np.array(values, dtype=float).ravel()
    array.setflags(write=False)
    return array


def trapezoid_weights(times: ArrayLike) -> NDArray[np.float64]:
    """Composite trapezoid weights over the span of ``times``."""
    t = np.asarray(times, dtype=float).ravel()
    if t.size < 2:
        raise DomainError("at least two nodes are required")
    gaps = np.diff(t)
    if np.any(gaps <= 0.0):
        raise DomainError("nodes must be strictly increasing")
    weights = np.empty_like(t)
    weights[0] = gaps[0] / 2.0
    weights[-1] = gaps[-1] / 2.0
    weights[1:-1] = (t[2:] - t[:-2]) / 2.0
    return weights


@dataclass(frozen=True, slots=True, eq=False)
class ObservationSet:
    times: NDArray[np.float64]
    weights: NDArray[np.float64]
    values: NDArray[np.float64]
    noise_level: float = 0.0
    seed: int | None = None
    signal_norm: float = math.nan

    def __post_init__(self) -> None:
        for name in ("times", "weights", "values"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        size = self.times.size
        if size < 2:
            raise DomainError("an observation set needs at least two nodes")
        if self.weights.size != size or self.values.size != size:
            raise DomainError("times, weights and values must have equal length")
        if self.times[0] <= 0.0 or np.any(np.diff(self.times) <= 0.0):
            raise DomainError("observation times must be positive and strictly increasing")
        if np.any(self.weights < 0.0):
            raise DomainError("quadrature weights must be non-negative")
        if self.noise_level < 0.0:
            raise DomainError("noise level must be non-negative")

    @classmethod
    def from_table(
        cls, times: ArrayLike, values: ArrayLike, weights: ArrayLike | None = None
    ) -> ObservationSet:
        """Observation set from loaded columns; stored weights are checked against the trapezoid rule."""
        expected = trapezoid_weights(times)
        if weights is not None and not np.allclose(weights, expected, rtol=1e-12, atol=0.0):
            logger.warning("Loaded weights differ from the trapezoid rule; using recomputed weights")
        return cls(times, expected, values)

    @property
    def size(self) -> int:
        return int(self.times.size)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def make_observations(
    expansion: SpectralExpansion,
    a_star: FractionalTriple,
    m: int = DEFAULT_OBSERVATIONS,
    horizon: float = DEFAULT_HORIZON,
    delta: float = 0.0,
    seed: int | None = 0,
) -> ObservationSet:
    """Centre trace of u(a*) at t_i = i T / m, perturbed by (delta / ||u||) * U(-1, 1)."""
    if m < 2:
        raise DomainError(f"need at least two observation nodes, got {m}")
    if horizon <= 0.0:
        raise DomainError(f"horizon must be positive, got {horizon!r}")
    if delta < 0.0:
        raise DomainError(f"noise level must be non-negative, got {delta!r}")
    times = horizon * np.arange(1, m + 1, dtype=float) / m
    weights = trapezoid_weights(times)
    clean = trace_at_center(expansion, a_star, times)
    signal_norm = float(np.sqrt(np.sum(weights * clean**2)))
    if delta == 0.0:
        values = clean.copy()
    else:
        if signal_norm == 0.0:
            raise DegenerateSignalError("cannot scale noise against an identically zero signal")
        rng = np.random.default_rng(seed)
        xi = 2.0 * rng.random(m) - 1.0
        values = clean + (delta / signal_norm) * xi
    logger.debug("Built %d observations (delta=%g, seed=%s, ||u||=%.6g)", m, delta, seed, signal_norm)
    return ObservationSet(times, weights, values, delta, seed, signal_norm)


def _check_open_domain(values: NDArray[np.float64]) -> bool:
    return bool(0.0 < values[0] < 1.0 and 0.0 < values[1] < 2.0 and 0.0 < values[2] < 2.0)


@dataclass(frozen=True, slots=True, eq=False)
class ResidualModel:
    observations: ObservationSet
    expansion: SpectralExpansion
    box: ParameterBox = field(default_factory=ParameterBox)
    lam: float = 0.0
    fd_steps: tuple[float, float, float] = (DEFAULT_FD_STEP, DEFAULT_FD_STEP, DEFAULT_FD_STEP)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise DomainError(f"lambda must be non-negative, got {self.lam!r}")
        if len(self.fd_steps) != 3 or any(not step > 0.0 for step in self.fd_steps):
            raise DomainError(f"finite-difference steps must be three positive numbers, got {self.fd_steps!r}")

    @property
    def sqrt_weights(self) -> NDArray[np.float64]:
        return np.sqrt(self.observations.weights)

    def with_lambda(self, lam: float) -> ResidualModel:
        return dataclasses.replace(self, lam=lam)

    def trace(self, a: FractionalTriple) -> NDArray[np.float64]:
        return trace_at_center(self.expansion, a, self.observations.times)

    def residual_vector(self, a: FractionalTriple) -> NDArray[np.float64]:
        return self.sqrt_weights * (self.trace(a) - self.observations.values)

    def discrepancy(self, a: FractionalTriple) -> float:
        r = self.residual_vector(a)
        return 0.5 * float(r @ r)

    def penalty(self, a: FractionalTriple) -> float:
        values = a.as_array()
        return 0.5 * self.lam * float(values @ values)

    def objective(self, a: FractionalTriple) -> float:
        return self.discrepancy(a) + self.penalty(a)

    def jacobian_fd(
        self, a: FractionalTriple, base: NDArray[np.float64] | None = None
    ) -> NDArray[np.float64]:
        """Forward-difference Jacobian of the residual vector, one column per parameter."""
        r0 = self.residual_vector(a) if base is None else base
        point = a.as_array()
        columns = []
        for index, step in enumerate(self.fd_steps):
            shifted = point.copy()
            shifted[index] += step
            if not _check_open_domain(shifted):
                raise StepOutOfDomainError(
                    f"step {step:g} on component {index} leaves the parameter domain at {a.format()}"
                )
            columns.append((self.residual_vector(FractionalTriple.from_array(shifted)) - r0) / step)
        return np.column_stack(columns)

    def jacobian_analytic_space(self, a: FractionalTriple) -> NDArray[np.float64]:
        """Exact alpha and gamma columns of the residual Jacobian."""
        times = self.observations.times
        ns, weights = self.expansion.center_weights()
        if ns.size == 0:
            return np.zeros((times.size, 2))
        scaled = times**a.beta
        arguments = -np.outer(mu(ns, a), scaled)
        slope = np.asarray(mittag_leffler_deriv(a.beta, 1.0, arguments), dtype=float).reshape(arguments.shape)
        p = ns * (math.pi / 2.0)
        log_p = np.log(p)
        columns = []
        for exponent in (a.alpha, a.gamma):
            sensitivity = (weights * p**exponent * log_p) @ slope
            columns.append(-scaled * sensitivity * self.sqrt_weights)
        return np.column_stack(columns)
