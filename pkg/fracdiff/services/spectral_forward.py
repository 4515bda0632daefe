"""Spectral solution of the double-scale time-fractional diffusion problem on (-1, 1)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special

from .errors import DomainError, NumericalError
from .mittag_leffler import mittag_leffler

logger = logging.getLogger(__name__)

InitialCondition = Callable[[float], float]

AUTO_TRUNCATION_DECADE = 10
AUTO_TRUNCATION_TAIL = 1e-8
AUTO_TRUNCATION_CAP = 400
QUAD_LIMIT = 200
CAPUTO_WARNING_FACTOR = 10.0
CAPUTO_LAYER_FRACTION = 0.1

EXAMPLE1_COEFFICIENTS: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 0.5)


class QuadratureError(NumericalError):
    """Raised when a spectral coefficient misses its quadrature tolerance."""

    def __init__(self, mode: int, interval: tuple[float, float], error: float) -> None:
        self.mode = mode
        self.interval = interval
        self.error = error
        super().__init__(
            f"coefficient {mode} did not converge: estimated error {error:.3g}, "
            f"worst interval [{interval[0]:.6g}, {interval[1]:.6g}]"
        )


@dataclass(frozen=True, slots=True)
class FractionalTriple:
    beta: float
    alpha: float
    gamma: float

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not 0.0 < self.alpha < 2.0:
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        if not 0.0 < self.gamma < 2.0:
            raise DomainError(f"gamma must lie in (0, 2), got {self.gamma!r}")

    @classmethod
    def from_array(cls, values: ArrayLike) -> FractionalTriple:
        beta, alpha, gamma = (float(v) for v in np.asarray(values, dtype=float).ravel())
        return cls(beta, alpha, gamma)

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.beta, self.alpha, self.gamma], dtype=float)

    def swapped(self) -> FractionalTriple:
        return FractionalTriple(self.beta, self.gamma, self.alpha)

    def canonical(self) -> FractionalTriple:
        """Reporting form with alpha <= gamma; every observable is swap-invariant."""
        return self.swapped() if self.alpha > self.gamma else self

    def format(self) -> str:
        return f"{self.beta:.17g},{self.alpha:.17g},{self.gamma:.17g}"


@dataclass(frozen=True, slots=True)
class ParameterBox:
    beta_lo: float = 0.01
    beta_hi: float = 0.99
    alpha_lo: float = 0.01
    alpha_hi: float = 1.99
    gamma_lo: float = 0.01
    gamma_hi: float = 1.99

    def __post_init__(self) -> None:
        for name, lo, hi, cap in (
            ("beta", self.beta_lo, self.beta_hi, 1.0),
            ("alpha", self.alpha_lo, self.alpha_hi, 2.0),
            ("gamma", self.gamma_lo, self.gamma_hi, 2.0),
        ):
            if not 0.0 < lo <= hi < cap:
                raise DomainError(f"{name} bounds must satisfy 0 < lo <= hi < {cap:g}, got [{lo!r}, {hi!r}]")

    @property
    def lower(self) -> NDArray[np.float64]:
        return np.array([self.beta_lo, self.alpha_lo, self.gamma_lo], dtype=float)

    @property
    def upper(self) -> NDArray[np.float64]:
        return np.array([self.beta_hi, self.alpha_hi, self.gamma_hi], dtype=float)

    def contains(self, a: FractionalTriple) -> bool:
        values = a.as_array()
        return bool(np.all(values >= self.lower) and np.all(values <= self.upper))

    def clip(self, values: ArrayLike) -> NDArray[np.float64]:
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def sample(self, rng: np.random.Generator, count: int) -> list[FractionalTriple]:
        """Uniform draws over the box, one triple per row."""
        draws = rng.uniform(self.lower, self.upper, size=(count, 3))
        return [FractionalTriple.from_array(self.clip(row)) for row in draws]


@dataclass(frozen=True, slots=True)
class Mode:
    n: int
    mu_bar: float
    c: float


@dataclass(frozen=True, slots=True)
class SpectralExpansion:
    modes: tuple[Mode, ...]
    truncation: int
    coeff_tolerance: float = 0.0
    _indices: NDArray[np.int64] = field(init=False, repr=False, compare=False)
    _coefficients: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        indices = [mode.n for mode in self.modes]
        if any(n < 1 for n in indices):
            raise DomainError("mode indices start at 1")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DomainError("modes must be sorted by index without duplicates")
        if indices and indices[-1] > self.truncation:
            raise DomainError(f"mode {indices[-1]} exceeds truncation {self.truncation}")
        if self.coeff_tolerance < 0.0:
            raise DomainError("coefficient tolerance must be non-negative")
        object.__setattr__(self, "_indices", np.array(indices, dtype=np.int64))
        object.__setattr__(self, "_coefficients", np.array([m.c for m in self.modes], dtype=float))

    @classmethod
    def from_coefficients(
        cls, coefficients: Sequence[float], coeff_tolerance: float = 0.0
    ) -> SpectralExpansion:
        """Expansion with c_n = coefficients[n - 1]; nothing is truncated away."""
        modes = tuple(
            Mode(n, (n * math.pi / 2.0) ** 2, float(c)) for n, c in enumerate(coefficients, start=1)
        )
        return cls(modes, len(modes), coeff_tolerance)

    @property
    def indices(self) -> NDArray[np.int64]:
        return self._indices

    @property
    def coefficients(self) -> NDArray[np.float64]:
        return self._coefficients

    def truncated(self, count: int) -> SpectralExpansion:
        if count < 1:
            raise DomainError(f"truncation must be at least 1, got {count}")
        return SpectralExpansion(
            tuple(m for m in self.modes if m.n <= count), count, self.coeff_tolerance
        )

    def tail_bound(self, count: int) -> float:
        """Sum of |c_n| for the stored modes beyond ``count``."""
        return float(np.abs(self._coefficients[self._indices > count]).sum())

    def active(self) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        keep = self._coefficients != 0.0
        return self._indices[keep], self._coefficients[keep]

    def center_weights(self) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Odd modes with c_n * psi_n(0); even modes vanish at the centre."""
        ns, cs = self.active()
        odd = ns % 2 == 1
        ns, cs = ns[odd], cs[odd]
        signs = np.where(((ns - 1) // 2) % 2 == 0, 1.0, -1.0)
        return ns, signs * cs


def eigenfunction(n: int, x: ArrayLike) -> NDArray[np.float64] | float:
    """psi_n(x) = sin(n pi (x + 1) / 2), exact zeros at the nodes and at x = +-1."""
    if n < 1:
        raise DomainError(f"mode index must be at least 1, got {n}")
    xs = np.asarray(x, dtype=float)
    if np.any(np.abs(xs) > 1.0):
        raise DomainError("positions must lie in [-1, 1]")
    reduced = np.mod(n * (xs + 1.0) / 2.0, 2.0)
    values = np.sin(np.pi * reduced)
    values = np.where(reduced == np.round(reduced), 0.0, values)
    values = np.where(np.abs(xs) == 1.0, 0.0, values)
    if xs.ndim == 0:
        return float(values)
    return values


def mu(n: ArrayLike, a: FractionalTriple) -> NDArray[np.float64] | float:
    """mu_n = (n pi / 2)^alpha + (n pi / 2)^gamma."""
    ns = np.asarray(n, dtype=float)
    if np.any(ns < 1):
        raise DomainError("mode index must be at least 1")
    p = ns * (math.pi / 2.0)
    values = p**a.alpha + p**a.gamma
    if ns.ndim == 0:
        return float(values)
    return values


def expand(f: InitialCondition, count: int, tol: float = 1e-8) -> SpectralExpansion:
    """Project ``f`` onto psi_1..psi_count by weighted adaptive quadrature."""
    if count < 1:
        raise DomainError(f"truncation must be at least 1, got {count}")
    if tol <= 0.0:
        raise DomainError(f"quadrature tolerance must be positive, got {tol!r}")
    modes = tuple(Mode(n, (n * math.pi / 2.0) ** 2, _coefficient(f, n, tol)) for n in range(1, count + 1))
    logger.debug("Expanded initial condition into %d modes (tol=%g)", count, tol)
    return SpectralExpansion(modes, count, tol)


def expand_auto(
    f: InitialCondition, tol: float = 1e-8, cap: int = AUTO_TRUNCATION_CAP
) -> SpectralExpansion:
    """Grow the expansion a decade at a time until the estimated tail drops below 1e-8."""
    if tol <= 0.0:
        raise DomainError(f"quadrature tolerance must be positive, got {tol!r}")
    modes: list[Mode] = []
    tail = math.inf
    while len(modes) < cap:
        start = len(modes) + 1
        stop = min(start + AUTO_TRUNCATION_DECADE, cap + 1)
        decade = [Mode(n, (n * math.pi / 2.0) ** 2, _coefficient(f, n, tol)) for n in range(start, stop)]
        modes.extend(decade)
        # Coefficients inside the quadrature noise do not count towards the tail.
        tail = sum(abs(m.c) for m in decade if abs(m.c) > tol)
        if tail < AUTO_TRUNCATION_TAIL:
            break
    else:
        logger.info("Auto truncation hit the cap of %d modes (tail estimate %.3g)", cap, tail)
    logger.debug("Auto truncation chose N=%d", len(modes))
    return SpectralExpansion(tuple(modes), len(modes), tol)


def _coefficient(f: InitialCondition, n: int, tol: float) -> float:
    # psi_n(x) = (-1)^((n-1)/2) cos(n pi x / 2) for odd n, (-1)^(n/2) sin(n pi x / 2) for even n.
    wvar = n * math.pi / 2.0
    if n % 2 == 1:
        weight, sign = "cos", (1.0 if ((n - 1) // 2) % 2 == 0 else -1.0)
    else:
        weight, sign = "sin", (1.0 if (n // 2) % 2 == 0 else -1.0)
    result = integrate.quad(
        f, -1.0, 1.0, weight=weight, wvar=wvar, epsabs=tol, epsrel=0.0, limit=QUAD_LIMIT, full_output=1
    )
    value, abserr, info = result[0], result[1], result[2]
    if len(result) > 3 or not abserr <= tol:
        raise QuadratureError(n, _worst_interval(info), float(abserr))
    return sign * float(value)


def _worst_interval(info: dict) -> tuple[float, float]:
    try:
        last = int(info["last"])
        elist = np.asarray(info["elist"][:last])
        worst = int(np.argmax(elist))
        return float(info["alist"][worst]), float(info["blist"][worst])
    except (KeyError, TypeError, ValueError):
        return -1.0, 1.0


def _decay(ns: NDArray[np.int64], a: FractionalTriple, times: NDArray[np.float64]) -> NDArray[np.float64]:
    """E_beta(-mu_n t^beta) for every (mode, time) pair in one batched call."""
    arguments = -np.outer(mu(ns, a), times**a.beta)
    return np.asarray(mittag_leffler(a.beta, 1.0, arguments), dtype=float).reshape(arguments.shape)


def _check_times(times: NDArray[np.float64]) -> None:
    if not np.all(np.isfinite(times)) or np.any(times < 0.0):
        raise DomainError("times must be finite and non-negative")


def solution(
    expansion: SpectralExpansion, a: FractionalTriple, t: ArrayLike, x: ArrayLike
) -> NDArray[np.float64] | float:
    """u(a)(t, x); array inputs give an array of shape ``shape(t) + shape(x)``."""
    t_arr = np.asarray(t, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    times = t_arr.ravel()
    positions = x_arr.ravel()
    _check_times(times)
    ns, cs = expansion.active()
    if ns.size == 0:
        values = np.zeros((times.size, positions.size))
    else:
        basis = np.vstack([eigenfunction(int(n), positions) for n in ns])
        values = _decay(ns, a, times).T @ (cs[:, None] * basis)
    values = values.reshape(t_arr.shape + x_arr.shape)
    if values.ndim == 0:
        return float(values)
    return values


def trace_at_center(
    expansion: SpectralExpansion, a: FractionalTriple, times: ArrayLike
) -> NDArray[np.float64]:
    """u(a)(t, 0) over ``times``."""
    ts = np.asarray(times, dtype=float).ravel()
    _check_times(ts)
    ns, weights = expansion.center_weights()
    if ns.size == 0:
        return np.zeros(ts.size)
    return weights @ _decay(ns, a, ts)


def graded_mesh(horizon: float, points: int, beta: float) -> NDArray[np.float64]:
    """t_j = T (j / M)^(2 / beta), j = 1..M."""
    if points < 1 or horizon <= 0.0 or not 0.0 < beta <= 1.0:
        raise DomainError("graded mesh needs points >= 1, horizon > 0 and beta in (0, 1]")
    j = np.arange(1, points + 1, dtype=float)
    return horizon * (j / points) ** (2.0 / beta)


def caputo_check(
    a: FractionalTriple, mu_val: float, t_grid: ArrayLike, t_min: float | None = None
) -> float:
    """Max of |D_t^beta q + mu q| for q(t) = E_beta(-mu t^beta), L1 scheme.

    The maximum runs over mesh nodes with ``t >= t_min`` (default: a tenth of
    the horizon). Near t = 0 the L1 consistency error of t^beta behaviour stays
    O(1) under refinement, so the initial layer is left out of the measure.
    """
    t = np.asarray(t_grid, dtype=float).ravel()
    if mu_val < 0.0:
        raise DomainError(f"eigenvalue must be non-negative, got {mu_val!r}")
    if t.size == 0 or t[0] <= 0.0 or np.any(np.diff(t) <= 0.0):
        raise DomainError("mesh must be strictly increasing and start above 0")
    cutoff = CAPUTO_LAYER_FRACTION * t[-1] if t_min is None else t_min
    measured = t >= cutoff
    if not measured.any():
        raise DomainError(f"no mesh node lies at or beyond t_min={cutoff!r}")
    beta = a.beta
    nodes = np.concatenate(([0.0], t))
    q = np.asarray(mittag_leffler(beta, 1.0, -mu_val * nodes**beta), dtype=float)
    slopes = np.diff(q) / np.diff(nodes)
    exponent = 1.0 - beta
    target = t[:, None]
    # Clipping zeroes the kernel above the diagonal.
    kernel = np.clip(target - nodes[None, :-1], 0.0, None) ** exponent - np.clip(
        target - nodes[None, 1:], 0.0, None
    ) ** exponent
    derivative = kernel @ slopes / special.gamma(2.0 - beta)
    residual = float(np.max(np.abs(derivative + mu_val * q[1:])[measured]))

    step = float(np.max(np.diff(nodes)))
    expected = max(mu_val, 1.0) ** 2 * step ** (2.0 - beta)
    if residual > CAPUTO_WARNING_FACTOR * expected:
        logger.warning(
            "Caputo residual %.3g exceeds %gx the truncation estimate %.3g; mesh too coarse",
            residual,
            CAPUTO_WARNING_FACTOR,
            expected,
        )
    return residual


@dataclass(frozen=True, slots=True)
class CaputoLevel:
    points: int
    max_step: float
    residual: float
    order: float | None


def caputo_convergence(
    a: FractionalTriple,
    mu_val: float,
    levels: Sequence[int] = (100, 200, 400),
    horizon: float = 1.0,
) -> list[CaputoLevel]:
    """Residuals on successively refined graded meshes and the observed orders in max step."""
    rows: list[CaputoLevel] = []
    previous: tuple[float, float] | None = None
    for points in levels:
        mesh = graded_mesh(horizon, points, a.beta)
        step = float(np.max(np.diff(np.concatenate(([0.0], mesh)))))
        residual = caputo_check(a, mu_val, mesh)
        order = None
        if previous is not None and residual > 0.0 and previous[1] > 0.0:
            order = math.log(previous[1] / residual) / math.log(previous[0] / step)
        rows.append(CaputoLevel(points, step, residual, order))
        previous = (step, residual)
    return rows


def example1_initial_condition(x: float) -> float:
    return math.cos(math.pi * x / 2.0) + 0.5 * math.cos(5.0 * math.pi * x / 2.0)


def example2_initial_condition(x: float) -> float:
    return math.exp(-x * x) - math.exp(-1.0)


def example1_expansion() -> SpectralExpansion:
    """psi_1 + psi_5 / 2 without quadrature."""
    return SpectralExpansion.from_coefficients(EXAMPLE1_COEFFICIENTS)


BUILTIN_INITIAL_CONDITIONS: dict[str, InitialCondition] = {
    "example1": example1_initial_condition,
    "example2": example2_initial_condition,
}
