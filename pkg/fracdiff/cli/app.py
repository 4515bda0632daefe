"""Command-line front-end for the fractional diffusion toolkit."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Callable, Mapping, Sequence

from ..config import ConfigError, RunConfig, parse_config
from ..logger import setup_logging
from ..repository import FLOAT_FORMAT, ArtifactRepository
from ..services import validation
from ..services.errors import DomainError, NumericalError
from ..services.experiment_service import ExperimentService, run_example1, run_example2

logger = logging.getLogger(__name__)

PROG = "fracdiff"
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args: argparse.Namespace, overrides: Mapping[str, str | None] | None = None) -> RunConfig:
    config = parse_config(getattr(args, "config", None))
    if overrides:
        config = config.with_overrides(overrides)
    return config


def _service(args: argparse.Namespace, config: RunConfig) -> ExperimentService:
    return ExperimentService(config, _repository(args, config))


def _repository(args: argparse.Namespace, config: RunConfig) -> ArtifactRepository:
    return ArtifactRepository(getattr(args, "out_dir", None) or config.output_dir or None)


def _text(value: object) -> str | None:
    return None if value is None else str(value)


def _cmd_ml(args: argparse.Namespace) -> int:
    value = ExperimentService.evaluate_ml(args.beta, args.nu, args.z, args.deriv)
    sys.stdout.write(FLOAT_FORMAT % value + "\n")
    return EXIT_OK


def _cmd_forward(args: argparse.Namespace) -> int:
    config = _load(args, {"truncation": _text(args.truncation)})
    _service(args, config).forward(args.out, args.x_points)
    return EXIT_OK


def _cmd_observe(args: argparse.Namespace) -> int:
    config = _load(args, {"delta": _text(args.delta), "seed": _text(args.seed)})
    _service(args, config).observe(args.out)
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    config = _load(
        args,
        {
            "lambda": _text(args.lam),
            "a0": args.a0,
            "starts": _text(args.starts),
            "seed": _text(args.seed),
        },
    )
    service = _service(args, config)
    outcome = service.estimate(service.load_observations(args.obs), args.out, args.trace)
    report = outcome.report
    logger.info("Estimated %s with I=%.6g (%s)", report.a_final.format(), report.discrepancy, report.reason)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    grid, error = validation.parse_grid("grid", args.grid)
    if error:
        raise ConfigError(error)
    config = _load(args, {"epsilon": _text(args.epsilon), "morozov_tau": _text(args.tau)})
    service = _service(args, config)
    result = service.sweep(service.load_observations(args.obs), grid, args.out, cold=args.cold)
    if result.selection is not None:
        logger.info(
            "Morozov selection lambda=%g%s", result.selection.lam, " (flagged)" if result.selection.flagged else ""
        )
    return EXIT_OK


def _cmd_truncation(args: argparse.Namespace) -> int:
    config = _load(args, {"levels": args.levels, "delta": _text(args.delta), "lambda": _text(args.lam)})
    _service(args, config).truncation(None, args.out, args.errors)
    return EXIT_OK


def _cmd_example1(args: argparse.Namespace) -> int:
    config = _load(args)
    report = run_example1(config, args.delta, args.seed, _repository(args, config))
    logger.info("Example 1 estimate %s after %d iterations", report.a_final.format(), report.iterations)
    return EXIT_OK


def _cmd_example2(args: argparse.Namespace) -> int:
    config = _load(args, {"levels": args.levels})
    run_example2(config, None, _repository(args, config))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog=PROG, description="Forward and inverse solver for double-scale fractional diffusion.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeat for debug)")
    parser.add_argument("--quiet", action="store_true", help="disable logging output")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, handler: Callable[[argparse.Namespace], int], help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.set_defaults(handler=handler)
        if name != "ml":
            sub.add_argument("--config", help="run configuration file (key = value)")
            sub.add_argument("--out-dir", dest="out_dir", help="directory for relative output paths")
        return sub

    ml_cmd = add("ml", _cmd_ml, "evaluate the Mittag-Leffler function E_{beta,nu}(z)")
    ml_cmd.add_argument("--beta", type=float, required=True)
    ml_cmd.add_argument("--nu", type=float, default=1.0)
    ml_cmd.add_argument("--z", type=float, required=True)
    ml_cmd.add_argument("--deriv", action="store_true", help="evaluate the derivative in z instead")

    forward = add("forward", _cmd_forward, "solve the forward problem at a_star")
    forward.add_argument("--out", required=True, help="CSV or XLSX output")
    forward.add_argument("--x-points", dest="x_points", type=int, help="write (t, x, u) on a uniform x grid")
    forward.add_argument("--truncation", type=int)

    observe = add("observe", _cmd_observe, "synthesize observations of the centre trace")
    observe.add_argument("--out", required=True)
    observe.add_argument("--delta", type=float)
    observe.add_argument("--seed", type=int)

    estimate = add("estimate", _cmd_estimate, "estimate (beta, alpha, gamma) from observations")
    estimate.add_argument("--obs", required=True, help="observation table (t, w, phi)")
    estimate.add_argument("--out", required=True, help="report file")
    estimate.add_argument("--trace", help="optional iteration trace CSV")
    estimate.add_argument("--lambda", dest="lam", type=float)
    estimate.add_argument("--a0", help="initial guess beta,alpha,gamma")
    estimate.add_argument("--starts", type=int)
    estimate.add_argument("--seed", type=int)

    sweep = add("sweep", _cmd_sweep, "sweep the Tikhonov parameter and apply the Morozov principle")
    sweep.add_argument("--obs", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--grid", default="dyadic:0:-12")
    sweep.add_argument("--epsilon", type=float, help="noise level; defaults to the realized I(a_star)")
    sweep.add_argument("--tau", type=float, help="Morozov safety factor on the residual norm (>= 1)")
    sweep.add_argument("--cold", action="store_true", help="start every lambda from a0, concurrently")

    truncation = add("truncation", _cmd_truncation, "study the effect of the spectral truncation level")
    truncation.add_argument("--out", required=True)
    truncation.add_argument("--errors", help="reconstruction-error grid output")
    truncation.add_argument("--levels")
    truncation.add_argument("--delta", type=float)
    truncation.add_argument("--lambda", dest="lam", type=float)

    example1 = add("example1", _cmd_example1, "reproduce Example 1 (psi_1 + psi_5 / 2)")
    example1.add_argument("--delta", type=float, default=0.0)
    example1.add_argument("--seed", type=int, default=0)

    example2 = add("example2", _cmd_example2, "reproduce Example 2 (exp(-x^2) - exp(-1))")
    example2.add_argument("--levels")
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    # DomainError is also a NumericalError; a bad user value is a usage error.
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        sys.stderr.write(f"{PROG}: error: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        sys.stderr.write(f"{PROG}: numerical error: {exc}\n")
        return EXIT_NUMERICAL
