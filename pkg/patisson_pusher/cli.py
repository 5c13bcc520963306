"""
Command-line front end of the package (console script `patisson-pusher`).

Subcommands:
    - integrate: Run one trajectory and write its CSV to stdout or a file.
    - converge: Run the convergence study and print the observed orders.
    - longtime: Run the long-time energy and momentum study and print the max drifts.
    - validate: Run the validation suites against a built-in model.
    - list-models: Print the built-in models and what they provide.

Exit codes:
    - 0: success
    - 1: a validation suite failed
    - 2: configuration error (unknown name or flag, invalid parameter, unsupported method/model pair)
    - 3: divergence of the fixed-point iteration or a field evaluation outside the model domain
    - 4: some experiment cells failed; the others were written

Data goes to stdout, log messages go to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from pydantic import ValidationError

from patisson_pusher.core import ParticleState, builtin_model
from patisson_pusher.errors import ConfigurationError, DivergenceError, DomainError
from patisson_pusher.harness import (
    PAPER_V0,
    PAPER_X0,
    ConvergenceRow,
    ExperimentConfig,
    ExperimentRunner,
    LongtimeRow,
    validate_model,
)
from patisson_pusher.integrators import SolverParams, integrate
from patisson_pusher.methods import Method, MethodSpec, ModelName
from patisson_pusher.output import format_number, write_trajectory_csv

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIGURATION = 2
EXIT_DIVERGENCE = 3
EXIT_PARTIAL = 4

LOG_FORMAT = "%(levelname)s | %(asctime)s | %(module)s | %(funcName)s | %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

logger = logging.getLogger("patisson_pusher")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(item) for item in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _vector(text: str) -> tuple[float, float, float]:
    values = _float_list(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return values[0], values[1], values[2]


def _method_list(text: str) -> tuple[Method, ...]:
    try:
        return tuple(Method(item.strip()) for item in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected methods from {[m.value for m in Method]}, got {text!r}"
        ) from None


def _add_initial_state(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--x0", type=_vector, default=PAPER_X0, help="initial position a,b,c")
    parser.add_argument("--v0", type=_vector, default=PAPER_V0, help="initial velocity a,b,c")


def _add_solver(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=float, default=1e-13, help="fixed-point tolerance")
    parser.add_argument("--max-iters", type=int, default=100, help="fixed-point iteration cap")


def _add_grid(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--methods", type=_method_list, default=None, help="e.g. boris,ep1,ep2,ep3")
    parser.add_argument("--stepsizes", type=_float_list, default=None, help="e.g. 0.05,0.1")
    parser.add_argument("--horizons", type=_float_list, default=None, help="e.g. 10,100,1000")
    parser.add_argument("--out-dir", type=Path, default=Path("results"))
    parser.add_argument("--workers", type=int, default=1, help="worker processes for experiment cells")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log debug messages to stderr")
    model_choices = [m.value for m in ModelName]

    parser = argparse.ArgumentParser(
        prog="patisson-pusher",
        description="Energy-preserving integrators for charged-particle dynamics.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    parser_integrate = subparsers.add_parser("integrate", parents=[common], help="run one trajectory")
    parser_integrate.add_argument("--model", choices=model_choices, default=ModelName.PAPER_SEC6.value)
    parser_integrate.add_argument("--method", choices=[m.value for m in Method], default=Method.EP2.value)
    parser_integrate.add_argument("--h", type=float, default=2.0**-6, help="negative runs backwards")
    parser_integrate.add_argument("--t-end", type=float, default=10.0)
    parser_integrate.add_argument("--field-strength", type=float, default=1.0, help="b of constant-B")
    parser_integrate.add_argument("--sample-every", type=int, default=1)
    parser_integrate.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    _add_initial_state(parser_integrate)
    _add_solver(parser_integrate)
    parser_integrate.set_defaults(handler=cmd_integrate)

    parser_converge = subparsers.add_parser("converge", parents=[common], help="run the convergence study")
    parser_converge.add_argument("--model", choices=model_choices, default=ModelName.PAPER_SEC6.value)
    parser_converge.add_argument("--oracle-refinement", type=int, default=None)
    _add_grid(parser_converge)
    _add_initial_state(parser_converge)
    _add_solver(parser_converge)
    parser_converge.set_defaults(handler=cmd_converge)

    parser_longtime = subparsers.add_parser("longtime", parents=[common], help="run the long-time study")
    parser_longtime.add_argument("--model", choices=model_choices, default=ModelName.PAPER_SEC6.value)
    parser_longtime.add_argument("--profile", choices=["ci", "full"], default="ci")
    parser_longtime.add_argument("--sample-every", type=int, default=None)
    _add_grid(parser_longtime)
    _add_initial_state(parser_longtime)
    _add_solver(parser_longtime)
    parser_longtime.set_defaults(handler=cmd_longtime)

    parser_validate = subparsers.add_parser("validate", parents=[common], help="validate a field model")
    parser_validate.add_argument("--model", choices=model_choices, default=ModelName.PAPER_SEC6.value)
    parser_validate.add_argument("--fd-step", type=float, default=1e-5)
    parser_validate.set_defaults(handler=cmd_validate)

    parser_list = subparsers.add_parser("list-models", parents=[common], help="list the built-in models")
    parser_list.set_defaults(handler=cmd_list_models)
    return parser


def cmd_integrate(args: argparse.Namespace) -> int:
    model = builtin_model(args.model, args.field_strength)
    method = MethodSpec(kind=Method(args.method), h=args.h)
    solver = SolverParams(tol=args.tol, max_iters=args.max_iters)
    state0 = ParticleState.from_components(args.x0, args.v0)

    record = integrate(state0, model, method, solver, args.t_end, args.sample_every, logger)
    if args.out == "-":
        write_trajectory_csv(record, sys.stdout)
    else:
        with Path(args.out).open("w", encoding="utf-8", newline="") as stream:
            write_trajectory_csv(record, stream)

    if not record.ok:
        logger.error(record.failure.describe())
        return EXIT_DIVERGENCE
    return EXIT_OK


def _grid_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {
        "model": args.model,
        "x0": args.x0,
        "v0": args.v0,
        "solver": SolverParams(tol=args.tol, max_iters=args.max_iters),
        "out_dir": args.out_dir,
        "workers": args.workers,
    }
    for name in ("methods", "stepsizes", "horizons"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    return overrides


def _print_table(header: Sequence[str], lines: Sequence[Sequence[str]]) -> None:
    widths = [max(len(row[i]) for row in [header, *lines]) for i in range(len(header))]
    for row in [header, *lines]:
        print("  ".join(cell.ljust(width) for cell, width in zip(row, widths, strict=True)).rstrip())


def _summary_value(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3e}"


def cmd_converge(args: argparse.Namespace) -> int:
    overrides = _grid_overrides(args)
    if args.oracle_refinement is not None:
        overrides["oracle"] = {"refinement": args.oracle_refinement}
    config = ExperimentConfig.paper_convergence(**overrides)
    rows: list[ConvergenceRow] = ExperimentRunner(
        config, logger_object=logger, logging_level=logger.level
    ).run_convergence()

    _print_table(
        ("method", "T", "h", "global_error", "observed_order", "status"),
        [
            (
                row.method.value,
                format_number(row.horizon),
                format_number(row.h),
                _summary_value(row.global_error),
                "-" if row.observed_order is None else f"{row.observed_order:.3f}",
                row.status,
            )
            for row in rows
        ],
    )
    return _experiment_exit_code(rows)


def cmd_longtime(args: argparse.Namespace) -> int:
    overrides = _grid_overrides(args)
    if args.sample_every is not None:
        overrides["sample_every"] = args.sample_every
    config = ExperimentConfig.paper_longtime(args.profile, **overrides)
    rows: list[LongtimeRow] = ExperimentRunner(
        config, logger_object=logger, logging_level=logger.level
    ).run_longtime()

    _print_table(
        ("method", "T", "h", "max_energy_drift", "max_momentum_drift", "status"),
        [
            (
                row.method.value,
                format_number(row.horizon),
                format_number(row.h),
                _summary_value(row.max_energy_drift),
                _summary_value(row.max_momentum_drift),
                row.status,
            )
            for row in rows
        ],
    )
    return _experiment_exit_code(rows)


def _experiment_exit_code(rows: Sequence[ConvergenceRow | LongtimeRow]) -> int:
    failed = [row for row in rows if not row.ok]
    for row in failed:
        logger.error(f"{row.method.value} h={row.h!r} T={row.horizon!r}: {row.status}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    model = builtin_model(args.model)
    report = validate_model(model, fd_step=args.fd_step)

    consistency = report.consistency
    print(f"model: {report.model}")
    print(f"force residual: {format_number(consistency.force_residual)}")
    print(f"curl residual: {format_number(consistency.curl_residual)}")
    if report.invariance is not None:
        print(f"invariance potential deviation: {format_number(report.invariance.potential_deviation)}")
        print(
            "invariance vector potential deviation: "
            f"{format_number(report.invariance.vector_potential_deviation)}"
        )
    for rule in report.quadrature:
        print(
            f"quadrature s={rule.stages}: exact error {format_number(rule.exact_error)}, "
            f"degree {2 * rule.stages} error {format_number(rule.inexact_error)}"
        )

    failures = report.failures()
    for failure in failures:
        logger.error(f"validation failed: {failure}")
    print("status: " + ("pass" if not failures else "fail"))
    return EXIT_OK if not failures else EXIT_VALIDATION_FAILED


def cmd_list_models(args: argparse.Namespace) -> int:
    for name in ModelName:
        model = builtin_model(name)
        direction = "-"
        if model.linear_direction is not None:
            direction = ",".join(format_number(a) for a in model.linear_direction)
        print(
            f"{name.value}\tvector_potential={'yes' if model.has_vector_potential else 'no'}"
            f"\tlinear_direction={direction}"
        )
    return EXIT_OK


def _configure_logging(verbose: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse the arguments, run the subcommand and map its errors to the exit codes of the module.

    Unknown flags and malformed values exit with code 2 through `argparse` (`SystemExit`).
    """
    args = build_parser().parse_args(argv)
    handler = _configure_logging(args.verbose)
    command: Callable[[argparse.Namespace], int] = args.handler
    try:
        return command(args)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIGURATION
    except (DivergenceError, DomainError) as e:
        logger.error(str(e))
        return EXIT_DIVERGENCE
    finally:
        logger.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
