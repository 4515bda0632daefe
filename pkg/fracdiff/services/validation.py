"""Validation and normalization helpers for run configuration values."""
from __future__ import annotations

import logging
import math

logger = logging.getLogger(__name__)

BUILTIN_CONDITIONS = ("example1", "example2")


def _split(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def parse_number(key: str, raw: str) -> tuple[float | None, str | None]:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        return None, f"{key}: expected a number, got {raw!r}"
    if not math.isfinite(value):
        return None, f"{key}: value must be finite, got {raw!r}"
    return value, None


def parse_integer(key: str, raw: str, minimum: int | None = None) -> tuple[int | None, str | None]:
    try:
        value = int(raw)
    except (TypeError, ValueError):
        return None, f"{key}: expected an integer, got {raw!r}"
    if minimum is not None and value < minimum:
        return None, f"{key}: must be at least {minimum}, got {value}"
    return value, None


def parse_positive(key: str, raw: str) -> tuple[float | None, str | None]:
    value, error = parse_number(key, raw)
    if error:
        return None, error
    if value <= 0.0:
        return None, f"{key}: must be positive, got {raw!r}"
    return value, None


def parse_tau(key: str, raw: str) -> tuple[float | None, str | None]:
    value, error = parse_number(key, raw)
    if error:
        return None, error
    if value < 1.0:
        return None, f"{key}: safety factor must be at least 1, got {raw!r}"
    return value, None


def parse_non_negative(key: str, raw: str) -> tuple[float | None, str | None]:
    value, error = parse_number(key, raw)
    if error:
        return None, error
    if value < 0.0:
        return None, f"{key}: must be non-negative, got {raw!r}"
    return value, None


def parse_open_interval(key: str, raw: str, low: float, high: float) -> tuple[float | None, str | None]:
    value, error = parse_number(key, raw)
    if error:
        return None, error
    if not low < value < high:
        return None, f"{key}: must lie in the open interval ({low:g}, {high:g}), got {raw!r}"
    return value, None


def parse_numbers(key: str, raw: str, count: int | None = None) -> tuple[tuple[float, ...] | None, str | None]:
    parts = _split(raw)
    if count is not None and len(parts) != count:
        return None, f"{key}: expected {count} comma-separated numbers, got {raw!r}"
    if not parts:
        return None, f"{key}: expected a comma-separated list of numbers"
    values = []
    for part in parts:
        value, error = parse_number(key, part)
        if error:
            return None, error
        values.append(value)
    return tuple(values), None


def parse_triple(key: str, raw: str) -> tuple[tuple[float, float, float] | None, str | None]:
    """Parse ``beta, alpha, gamma`` inside (0, 1) x (0, 2) x (0, 2)."""
    values, error = parse_numbers(key, raw, 3)
    if error:
        return None, error
    beta, alpha, gamma = values
    if not 0.0 < beta < 1.0:
        return None, f"{key}: beta must lie in (0, 1), got {beta!r}"
    if not (0.0 < alpha < 2.0 and 0.0 < gamma < 2.0):
        return None, f"{key}: alpha and gamma must lie in (0, 2), got {alpha!r}, {gamma!r}"
    return (beta, alpha, gamma), None


def parse_steps(key: str, raw: str) -> tuple[tuple[float, float, float] | None, str | None]:
    values, error = parse_numbers(key, raw)
    if error:
        return None, error
    if len(values) == 1:
        values = values * 3
    if len(values) != 3 or any(value <= 0.0 for value in values):
        return None, f"{key}: expected one or three positive steps, got {raw!r}"
    return values, None


def parse_levels(key: str, raw: str) -> tuple[tuple[int, ...] | None, str | None]:
    levels = []
    for part in _split(raw):
        value, error = parse_integer(key, part, minimum=1)
        if error:
            return None, error
        levels.append(value)
    if not levels:
        return None, f"{key}: expected at least one truncation level"
    if any(b <= a for a, b in zip(levels, levels[1:])):
        return None, f"{key}: levels must be strictly increasing, got {raw!r}"
    return tuple(levels), None


def parse_truncation(key: str, raw: str) -> tuple[int | None, str | None]:
    """``auto`` maps to None."""
    if raw.strip().lower() == "auto":
        return None, None
    return parse_integer(key, raw, minimum=1)


def parse_epsilon(key: str, raw: str) -> tuple[float | None, str | None]:
    if raw.strip().lower() == "auto":
        return None, None
    return parse_non_negative(key, raw)


def parse_initial_condition(key: str, raw: str) -> tuple[str | tuple[float, ...] | None, str | None]:
    """A builtin name or a coefficient list c1, c2, ..."""
    name = raw.strip().lower()
    if name in BUILTIN_CONDITIONS:
        return name, None
    values, error = parse_numbers(key, raw)
    if error:
        return None, f"{key}: expected one of {', '.join(BUILTIN_CONDITIONS)} or a coefficient list, got {raw!r}"
    return values, None


def validate_bounds(name: str, low: float, high: float, cap: float) -> str | None:
    if not 0.0 < low <= high < cap:
        return f"{name}_lo/{name}_hi: need 0 < lo <= hi < {cap:g}, got [{low!r}, {high!r}]"
    return None


def validate_inside(key: str, point: tuple[float, float, float], lower: tuple, upper: tuple) -> str | None:
    if any(not lo <= value <= hi for value, lo, hi in zip(point, lower, upper)):
        return f"{key}: {point!r} lies outside the parameter box"
    return None


def parse_grid(key: str, raw: str) -> tuple[tuple[float, ...] | None, str | None]:
    """``dyadic:START:STOP`` for 2^START..2^STOP, or an explicit decreasing list."""
    text = raw.strip().lower()
    if text.startswith("dyadic:"):
        parts = text.split(":")
        if len(parts) != 3:
            return None, f"{key}: expected dyadic:START:STOP, got {raw!r}"
        start, error = parse_integer(key, parts[1])
        if error:
            return None, error
        stop, error = parse_integer(key, parts[2])
        if error:
            return None, error
        if stop > start:
            return None, f"{key}: dyadic grid must decrease, got {raw!r}"
        return tuple(2.0**exponent for exponent in range(start, stop - 1, -1)), None
    values, error = parse_numbers(key, raw)
    if error:
        return None, error
    if any(value < 0.0 for value in values) or any(b >= a for a, b in zip(values, values[1:])):
        return None, f"{key}: lambdas must be non-negative and strictly decreasing, got {raw!r}"
    return values, None
