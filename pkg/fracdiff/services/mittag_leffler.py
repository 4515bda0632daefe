"""Two-parameter Mittag-Leffler function and its derivative on the real line.

Evaluation switches between three regions of the argument:

* ``|z| <= 1`` and any ``z > 0``: the power series;
* large negative ``z`` for orders below one: the asymptotic expansion;
* the remaining negative band: a real-axis integral obtained by collapsing
  the Hankel contour of the inverse Laplace transform onto the branch cut,
  plus the residues of the two complex poles for orders in (1, 2].

All functions are pure; nothing is cached between calls.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special

from .errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

MAX_ORDER = 2.0
SERIES_RADIUS = 1.0
SERIES_RTOL = 1e-16
SERIES_MAX_TERMS = 500
POSITIVE_SERIES_MAX_TERMS = 5000
ASYMPTOTIC_RTOL = 1e-16
ASYMPTOTIC_MAX_TERMS = 80
INTEGRAL_EPSABS = 1e-14
INTEGRAL_EPSREL = 1e-13
INTEGRAL_MAX_ERROR = 1e-10
INTEGRAL_LIMIT = 4000
INTEGRAL_MAX_PEAK_POINTS = 32
# exp(-50) is below 2e-22, far under the accuracy target.
DECAY_EXPONENT = 50.0


class MittagLefflerDomainError(DomainError):
    """Raised for orders or arguments outside the supported domain."""


class MittagLefflerConvergenceError(NumericalError):
    """Raised when no evaluation region attains the accuracy target."""

    def __init__(self, region: str, estimate: float, message: str | None = None) -> None:
        self.region = region
        self.estimate = estimate
        super().__init__(
            message
            or f"Mittag-Leffler evaluation did not converge in the {region} region "
            f"(partial estimate {estimate!r})"
        )


@dataclass(frozen=True, slots=True)
class MlQuery:
    beta: float
    nu: float
    z: float

    def __post_init__(self) -> None:
        _check_orders(self.beta, self.nu)
        if not math.isfinite(self.z):
            raise MittagLefflerDomainError(f"argument must be finite, got {self.z!r}")


def ml(query: MlQuery) -> float:
    """Return E_{beta,nu}(z)."""
    return float(_evaluate(float(query.beta), float(query.nu), np.array([float(query.z)]))[0])


def ml_deriv(query: MlQuery) -> float:
    """Return d/dz E_{beta,nu}(z)."""
    return float(
        _evaluate_deriv(float(query.beta), float(query.nu), np.array([float(query.z)]))[0]
    )


def mittag_leffler(beta: float, nu: float, z: ArrayLike) -> NDArray[np.float64] | float:
    """Vectorised E_{beta,nu}(z); scalars in, scalar out."""
    _check_orders(beta, nu)
    return _vectorized(_evaluate, beta, nu, z)


def mittag_leffler_deriv(beta: float, nu: float, z: ArrayLike) -> NDArray[np.float64] | float:
    """Vectorised derivative of E_{beta,nu} with respect to z."""
    _check_orders(beta, nu)
    return _vectorized(_evaluate_deriv, beta, nu, z)


def _check_orders(beta: float, nu: float) -> None:
    if not (math.isfinite(beta) and beta > 0.0):
        raise MittagLefflerDomainError(f"beta must be positive, got {beta!r}")
    if not (math.isfinite(nu) and nu > 0.0):
        raise MittagLefflerDomainError(f"nu must be positive, got {nu!r}")
    if beta > MAX_ORDER:
        raise MittagLefflerDomainError(f"orders above {MAX_ORDER} are not supported, got {beta!r}")


def _vectorized(
    func: Callable[[float, float, NDArray[np.float64]], NDArray[np.float64]],
    beta: float,
    nu: float,
    z: ArrayLike,
) -> NDArray[np.float64] | float:
    values = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(values)):
        raise MittagLefflerDomainError("arguments must be finite")
    flat = func(float(beta), float(nu), values.ravel())
    if values.ndim == 0:
        return float(flat[0])
    return flat.reshape(values.shape)


def _asymptotic_threshold(beta: float) -> float:
    return max(10.0, 5.0 * (2.0 * beta + 1.0) ** (1.0 / beta))


def _evaluate(beta: float, nu: float, z: NDArray[np.float64]) -> NDArray[np.float64]:
    # nu may be zero or negative here: the derivative recurrence lowers it by one.
    if beta == 1.0:
        closed = _order_one(nu, z)
        if closed is not None:
            return closed

    out = np.full(z.shape, np.nan)
    pending = np.ones(z.shape, dtype=bool)

    zero = z == 0.0
    out[zero] = special.rgamma(nu)
    pending &= ~zero

    near = pending & (np.abs(z) <= SERIES_RADIUS)
    if near.any():
        _fill(out, pending, near, *_series(beta, nu, z[near], SERIES_MAX_TERMS))

    positive = pending & (z > 0.0)
    if positive.any():
        values, converged = _series(beta, nu, z[positive], POSITIVE_SERIES_MAX_TERMS)
        bad = ~converged | ~np.isfinite(values)
        if bad.any():
            raise MittagLefflerConvergenceError("series", float(values[bad][0]))
        _fill(out, pending, positive, values, converged)

    x = -z
    if beta < 1.0:
        far = pending & (x >= _asymptotic_threshold(beta))
        if far.any():
            _fill(out, pending, far, *_asymptotic(beta, nu, x[far]))

    if pending.any():
        if beta == 1.0:
            raise MittagLefflerConvergenceError(
                "integral",
                math.nan,
                f"order one with nu={nu!r} is only available inside the series disc",
            )
        logger.debug("Integral region for %d argument(s), beta=%g nu=%g", int(pending.sum()), beta, nu)
        out[pending] = _integral(beta, nu, x[pending])
    return out


def _evaluate_deriv(beta: float, nu: float, z: NDArray[np.float64]) -> NDArray[np.float64]:
    if beta == 1.0 and nu == 1.0:
        return np.exp(z)

    out = np.full(z.shape, np.nan)
    pending = np.ones(z.shape, dtype=bool)

    zero = z == 0.0
    out[zero] = special.rgamma(beta + nu)
    pending &= ~zero

    near = pending & (np.abs(z) <= SERIES_RADIUS)
    if near.any():
        _fill(out, pending, near, *_series_deriv(beta, nu, z[near]))

    if pending.any():
        rest = z[pending]
        lowered = _evaluate(beta, nu - 1.0, rest)
        if nu != 1.0:
            lowered = lowered - (nu - 1.0) * _evaluate(beta, nu, rest)
        out[pending] = lowered / (beta * rest)
    return out


def _fill(
    out: NDArray[np.float64],
    pending: NDArray[np.bool_],
    mask: NDArray[np.bool_],
    values: NDArray[np.float64],
    converged: NDArray[np.bool_],
) -> None:
    index = np.flatnonzero(mask)[converged]
    out[index] = values[converged]
    pending[index] = False


def _order_one(nu: float, z: NDArray[np.float64]) -> NDArray[np.float64] | None:
    if nu == 1.0:
        return np.exp(z)
    if nu == 0.0:
        return z * np.exp(z)
    return None


def _series(
    beta: float, nu: float, z: NDArray[np.float64], max_terms: int
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    total = np.zeros_like(z)
    power = np.ones_like(z)
    converged = np.zeros(z.shape, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(max_terms):
            gamma_arg = beta * k + nu
            term = power * special.rgamma(gamma_arg)
            total = total + term
            # Past the minimum of Gamma the terms shrink monotonically for |z| <= 1.
            if gamma_arg > 2.0:
                converged = np.abs(term) <= SERIES_RTOL * np.maximum(np.abs(total), 1.0)
                if converged.all():
                    break
            power = power * z
    return total, converged


def _series_deriv(
    beta: float, nu: float, z: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    total = np.zeros_like(z)
    power = np.ones_like(z)
    converged = np.zeros(z.shape, dtype=bool)
    for k in range(1, SERIES_MAX_TERMS + 1):
        gamma_arg = beta * k + nu
        term = k * power * special.rgamma(gamma_arg)
        total = total + term
        if gamma_arg > 2.0 and k > 1:
            converged = np.abs(term) <= SERIES_RTOL * np.maximum(np.abs(total), 1.0)
            if converged.all():
                break
        power = power * z
    return total, converged


def _asymptotic(
    beta: float, nu: float, x: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    k = np.arange(1, ASYMPTOTIC_MAX_TERMS + 1, dtype=float)
    signs = np.where(k % 2 == 1, 1.0, -1.0)
    coefficients = signs * special.rgamma(nu - beta * k)
    with np.errstate(under="ignore"):
        terms = coefficients[None, :] * np.power(x[:, None], -k[None, :])
    partial = np.cumsum(terms, axis=1)
    small = np.abs(terms) <= ASYMPTOTIC_RTOL * np.abs(partial)
    # Three small terms in a row rule out a lone coefficient sitting near a Gamma pole.
    settled = small[:, :-2] & small[:, 1:-1] & small[:, 2:]
    converged = settled.any(axis=1)
    first = np.argmax(settled, axis=1)
    values = partial[np.arange(x.size), first]
    return values, converged


def _integral(beta: float, nu: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
    inv_beta = 1.0 / beta
    power = (1.0 - nu) * inv_beta
    cos_b = math.cos(math.pi * beta)
    sin_b = math.sin(math.pi * beta)
    sin_nu = math.sin(math.pi * nu)
    sin_bn = math.sin(math.pi * (beta - nu))
    scale = 1.0 / (beta * math.pi)
    upper = DECAY_EXPONENT**beta

    def integrand(y: float) -> NDArray[np.float64]:
        weight = scale * math.exp(-(y**inv_beta)) * y**power
        return weight * (y * sin_nu - x * sin_bn) / ((y + x * cos_b) ** 2 + (x * sin_b) ** 2)

    points = _breakpoints(x, cos_b, sin_b, upper)
    result, error = integrate.quad_vec(
        integrand,
        0.0,
        upper,
        epsabs=INTEGRAL_EPSABS,
        epsrel=INTEGRAL_EPSREL,
        norm="max",
        limit=INTEGRAL_LIMIT,
        points=points or None,
    )
    result = np.asarray(result, dtype=float)
    if not error <= INTEGRAL_MAX_ERROR:
        raise MittagLefflerConvergenceError("integral", float(result[0]))

    if beta > 1.0:
        t = x**inv_beta
        result = result + (2.0 / beta) * x**power * np.exp(t * math.cos(math.pi / beta)) * np.cos(
            t * math.sin(math.pi / beta) + math.pi * (1.0 - nu) / beta
        )
    return result


def _breakpoints(x: NDArray[np.float64], cos_b: float, sin_b: float, upper: float) -> list[float]:
    points = [1.0] if upper > 1.0 else []
    # The denominator is smallest at y = -x cos(beta pi); it is a narrow peak when sin is small.
    if cos_b < 0.0 and abs(sin_b) < abs(cos_b):
        peaks = np.unique(-cos_b * x)
        peaks = peaks[(peaks > 0.0) & (peaks < upper)]
        if peaks.size > INTEGRAL_MAX_PEAK_POINTS:
            picks = np.linspace(0, peaks.size - 1, INTEGRAL_MAX_PEAK_POINTS).round().astype(int)
            peaks = peaks[picks]
        points.extend(float(p) for p in peaks)
    return sorted(set(points))
