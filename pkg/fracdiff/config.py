"""Run configuration: flat ``key = value`` files with strict parsing."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping

from .services import validation
from .services.errors import DomainError
from .services.regularization_sweep import DEFAULT_MOROZOV_TAU
from .services.spectral_forward import FractionalTriple, ParameterBox
from .services.trust_region_solver import TrustRegionConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "FRACDIFF_THREADS"
ECHO_SUFFIX = ".config"

DEFAULT_CONFIG: Dict[str, str] = {
    "initial_condition": "example1",
    "horizon": "1.0",
    "observations": "200",
    "truncation": "auto",
    "quad_tol": "1e-8",
    "beta_lo": "0.01",
    "beta_hi": "0.99",
    "alpha_lo": "0.01",
    "alpha_hi": "1.99",
    "gamma_lo": "0.01",
    "gamma_hi": "1.99",
    "a_star": "0.4, 0.6, 1.2",
    "a0": "0.05, 0.1, 1.7",
    "lambda": "1e-7",
    "delta": "0.0",
    "seed": "0",
    "fd_step": "1e-7, 1e-7, 1e-7",
    "tr_radius0": "0.5",
    "tr_radius_max": "1.0",
    "tr_eta": "0.125",
    "tr_max_iters": "100",
    "tr_grad_tol": "1e-8",
    "tr_xtol": "1e-12",
    "tr_ftol": "1e-15",
    "starts": "1",
    "epsilon": "auto",
    "morozov_tau": repr(DEFAULT_MOROZOV_TAU),
    "levels": "5, 10, 20, 40, 80",
    "output_dir": "",
}


class ConfigError(Exception):
    """Raised when configuration parsing or validation fails."""


@dataclass(frozen=True, slots=True)
class RunConfig:
    initial_condition: str | tuple[float, ...]
    horizon: float
    observations: int
    truncation: int | None
    quad_tol: float
    box: ParameterBox
    a_star: FractionalTriple
    a0: FractionalTriple
    lam: float
    delta: float
    seed: int
    fd_steps: tuple[float, float, float]
    solver: TrustRegionConfig
    starts: int
    epsilon: float | None
    morozov_tau: float
    levels: tuple[int, ...]
    output_dir: str
    raw: Dict[str, str] = field(default_factory=dict, compare=False)

    def with_overrides(self, overrides: Mapping[str, str | None]) -> RunConfig:
        """Rebuild from the resolved raw values with ``overrides`` applied."""
        merged = dict(self.raw)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in DEFAULT_CONFIG:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = str(value)
        return build_config(merged)

    def to_text(self) -> str:
        return "".join(f"{key} = {self.raw[key]}\n" for key in DEFAULT_CONFIG)


def _require(errors: list[str], result: tuple) -> object:
    value, error = result
    if error:
        errors.append(error)
    return value


def build_config(values: Mapping[str, str]) -> RunConfig:
    """Validate raw string values (defaults filled in) and build a RunConfig."""
    unknown = sorted(set(values) - set(DEFAULT_CONFIG))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    raw = {key: str(values.get(key, default)).strip() for key, default in DEFAULT_CONFIG.items()}
    errors: list[str] = []

    initial = _require(errors, validation.parse_initial_condition("initial_condition", raw["initial_condition"]))
    horizon = _require(errors, validation.parse_positive("horizon", raw["horizon"]))
    observations = _require(errors, validation.parse_integer("observations", raw["observations"], minimum=2))
    truncation = _require(errors, validation.parse_truncation("truncation", raw["truncation"]))
    quad_tol = _require(errors, validation.parse_positive("quad_tol", raw["quad_tol"]))
    bounds = {}
    for name, cap in (("beta", 1.0), ("alpha", 2.0), ("gamma", 2.0)):
        low = _require(errors, validation.parse_open_interval(f"{name}_lo", raw[f"{name}_lo"], 0.0, cap))
        high = _require(errors, validation.parse_open_interval(f"{name}_hi", raw[f"{name}_hi"], 0.0, cap))
        if low is not None and high is not None:
            bound_error = validation.validate_bounds(name, low, high, cap)
            if bound_error:
                errors.append(bound_error)
        bounds[name] = (low, high)
    a_star = _require(errors, validation.parse_triple("a_star", raw["a_star"]))
    a0 = _require(errors, validation.parse_triple("a0", raw["a0"]))
    lam = _require(errors, validation.parse_non_negative("lambda", raw["lambda"]))
    delta = _require(errors, validation.parse_non_negative("delta", raw["delta"]))
    seed = _require(errors, validation.parse_integer("seed", raw["seed"], minimum=0))
    fd_steps = _require(errors, validation.parse_steps("fd_step", raw["fd_step"]))
    radius0 = _require(errors, validation.parse_positive("tr_radius0", raw["tr_radius0"]))
    radius_max = _require(errors, validation.parse_positive("tr_radius_max", raw["tr_radius_max"]))
    eta = _require(errors, validation.parse_non_negative("tr_eta", raw["tr_eta"]))
    max_iters = _require(errors, validation.parse_integer("tr_max_iters", raw["tr_max_iters"], minimum=1))
    grad_tol = _require(errors, validation.parse_positive("tr_grad_tol", raw["tr_grad_tol"]))
    xtol = _require(errors, validation.parse_non_negative("tr_xtol", raw["tr_xtol"]))
    ftol = _require(errors, validation.parse_non_negative("tr_ftol", raw["tr_ftol"]))
    starts = _require(errors, validation.parse_integer("starts", raw["starts"], minimum=1))
    epsilon = _require(errors, validation.parse_epsilon("epsilon", raw["epsilon"]))
    morozov_tau = _require(errors, validation.parse_tau("morozov_tau", raw["morozov_tau"]))
    levels = _require(errors, validation.parse_levels("levels", raw["levels"]))
    if errors:
        raise ConfigError(errors[0])

    lower = tuple(bounds[name][0] for name in ("beta", "alpha", "gamma"))
    upper = tuple(bounds[name][1] for name in ("beta", "alpha", "gamma"))
    inside_error = validation.validate_inside("a0", a0, lower, upper)
    if inside_error:
        raise ConfigError(inside_error)

    try:
        box = ParameterBox(*(value for pair in bounds.values() for value in pair))
        solver = TrustRegionConfig(radius0, radius_max, eta, max_iters, grad_tol, xtol, ftol)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        initial_condition=initial,
        horizon=horizon,
        observations=observations,
        truncation=truncation,
        quad_tol=quad_tol,
        box=box,
        a_star=FractionalTriple(*a_star),
        a0=FractionalTriple(*a0),
        lam=lam,
        delta=delta,
        seed=seed,
        fd_steps=fd_steps,
        solver=solver,
        starts=starts,
        epsilon=epsilon,
        morozov_tau=morozov_tau,
        levels=levels,
        output_dir=raw["output_dir"],
        raw=raw,
    )


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, separator, value = stripped.partition("=")
        key = key.strip()
        if not separator or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {line.strip()!r}")
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"{source}:{number}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value.strip()
    try:
        return build_config(values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_config(path: str | os.PathLike[str] | None) -> RunConfig:
    """Load a run configuration; ``None`` yields the defaults."""
    if path is None:
        return build_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def save_config_echo(path: str | os.PathLike[str], config: RunConfig) -> Path:
    """Write the resolved configuration atomically next to an output."""
    target = Path(path)
    tmp_path = target.with_name(target.name + ".tmp")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(config.to_text())
        os.replace(tmp_path, target)
    except OSError as exc:
        try:
            if tmp_path.exists():
                tmp_path.unlink()
        except OSError:
            logger.warning("Could not remove temporary file %s", tmp_path)
        raise ConfigError(f"cannot write configuration echo {target}: {exc}") from exc
    return target


def echo_path(output: str | os.PathLike[str]) -> Path:
    output_path = Path(output)
    return output_path.with_name(output_path.name + ECHO_SUFFIX)


def resolve_threads() -> int:
    """Worker cap from FRACDIFF_THREADS, defaulting to the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
    return max(1, os.cpu_count() or 1)
