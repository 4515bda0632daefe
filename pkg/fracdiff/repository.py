"""Data-layer helpers for tables, observation files and estimate reports."""
from __future__ import annotations

import io
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Mapping

import pandas as pd

from .config import RunConfig, echo_path, save_config_echo
from .services.inverse_objective import ObservationSet
from .services.trust_region_solver import EstimateReport, IterationRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
EXCEL_SUFFIXES = (".xlsx",)
OBSERVATION_COLUMNS = ("t", "w", "phi")
TRACE_COLUMNS = (
    "iter",
    "F",
    "I",
    "grad_norm",
    "R",
    "rho",
    "beta",
    "alpha",
    "gamma",
    "accepted",
    "R_next",
)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def _is_excel(path: Path) -> bool:
    return path.suffix.lower() in EXCEL_SUFFIXES


def frame_to_csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_table(path: str | os.PathLike[str]) -> pd.DataFrame:
    target = Path(path)
    if _is_excel(target):
        return pd.read_excel(target, engine="openpyxl")
    return pd.read_csv(target, encoding="utf-8")


def read_report(path: str | os.PathLike[str]) -> tuple[dict[str, str], pd.DataFrame]:
    """Split a report into its ``key = value`` header and iteration table."""
    text = Path(path).read_text(encoding="utf-8")
    head, _, body = text.partition("\n\n")
    header: dict[str, str] = {}
    for line in head.splitlines():
        key, separator, value = line.partition("=")
        if separator:
            header[key.strip()] = value.strip()
    table = pd.read_csv(io.StringIO(body)) if body.strip() else pd.DataFrame(columns=list(TRACE_COLUMNS))
    return header, table


def observations_frame(observations: ObservationSet) -> pd.DataFrame:
    return pd.DataFrame(
        {"t": observations.times, "w": observations.weights, "phi": observations.values},
        columns=list(OBSERVATION_COLUMNS),
    )


def observations_from_frame(frame: pd.DataFrame) -> ObservationSet:
    missing = [column for column in ("t", "phi") if column not in frame.columns]
    if missing:
        raise ValueError(f"observation table lacks column(s): {', '.join(missing)}")
    weights = frame["w"].to_numpy(dtype=float) if "w" in frame.columns else None
    return ObservationSet.from_table(frame["t"].to_numpy(dtype=float), frame["phi"].to_numpy(dtype=float), weights)


def history_frame(history: Iterable[IterationRecord]) -> pd.DataFrame:
    rows = [
        (
            record.iteration,
            record.objective,
            record.discrepancy,
            record.grad_norm,
            record.radius,
            record.rho,
            record.beta,
            record.alpha,
            record.gamma,
            record.accepted,
            record.radius_next,
        )
        for record in history
    ]
    return pd.DataFrame(rows, columns=list(TRACE_COLUMNS))


def report_header(report: EstimateReport, extra: Mapping[str, Any] | None = None) -> dict[str, Any]:
    header: dict[str, Any] = {
        "beta": report.a_final.beta,
        "alpha": report.a_final.alpha,
        "gamma": report.a_final.gamma,
        "beta_raw": report.a_raw.beta,
        "alpha_raw": report.a_raw.alpha,
        "gamma_raw": report.a_raw.gamma,
        "I_final": report.discrepancy,
        "F_final": report.objective,
        "lambda": report.lam,
        "reason": report.reason,
        "converged": report.converged,
        "iterations": report.iterations,
        "accepted_iterations": report.accepted_iterations,
        "grad_norm": report.grad_norm,
        "wall_time": report.wall_time,
    }
    header.update(report.metadata)
    if extra:
        header.update(extra)
    return header


class ArtifactRepository:
    """Writes run artifacts under an optional output directory and remembers them."""

    def __init__(self, output_dir: str | os.PathLike[str] | None = None):
        self.output_dir = Path(output_dir).absolute() if output_dir else None
        self.written: list[Path] = []
        self._version = 0

    @property
    def version(self) -> int:
        return self._version

    def resolve(self, path: str | os.PathLike[str]) -> Path:
        target = Path(path)
        if self.output_dir is not None and not target.is_absolute():
            return self.output_dir / target
        return target

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        self._version += 1
        logger.info("Wrote %s", path)
        return path

    def write_table(self, path: str | os.PathLike[str], frame: pd.DataFrame) -> Path:
        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        if _is_excel(target):
            frame.to_excel(target, index=False, engine="xlsxwriter")
        else:
            with open(target, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(frame_to_csv_text(frame))
        return self._record(target)

    def write_observations(self, path: str | os.PathLike[str], observations: ObservationSet) -> Path:
        return self.write_table(path, observations_frame(observations))

    def write_report(
        self, path: str | os.PathLike[str], report: EstimateReport, extra: Mapping[str, Any] | None = None
    ) -> Path:
        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {format_value(value)}" for key, value in report_header(report, extra).items()]
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines))
            handle.write("\n\n")
            handle.write(frame_to_csv_text(history_frame(report.history)))
        return self._record(target)

    def write_config_echo(self, output: str | os.PathLike[str], config: RunConfig) -> Path:
        """Resolved configuration next to ``output`` as ``<output>.config``."""
        return self._record(save_config_echo(echo_path(self.resolve(output)), config))

    def write_text(self, path: str | os.PathLike[str], text: str) -> Path:
        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        return self._record(target)
