"""
Command-line entry point.

    dpci simulate --config logistic_walk --seed 3 --out runs/episode
    dpci coverage --config logistic_walk --trials 200 --workers 4 --out runs/cov
    dpci errors   --config logistic_walk_ucb --trials 500 --out runs/err
    dpci diagnose --config logistic_walk --horizons 500,2000,8000 --out runs/diag

Exit codes: 0 success, 2 configuration or usage error, 3 experiment failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ExperimentError,
    bundled_configs,
    coverage_experiment,
    error_distribution_experiment,
    load_config,
    scaling_experiment,
)
from .pricing_env import ContextProcess, run_episode
from .utils import dumps_json, trial_seed, write_csv
from .visualisation import calibration_table, histogram_table

__all__ = ["cli_main", "main"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPERIMENT = 3


def _parse_horizons(text):
    try:
        horizons = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("horizons must be comma-separated integers")
    if not horizons:
        raise argparse.ArgumentTypeError("at least one horizon is needed")
    return horizons


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpci",
        description="Debiased confidence intervals for demand in contextual dynamic pricing.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default="logistic_walk",
        help="Config file or bundled name ({}).".format(", ".join(bundled_configs())),
    )
    common.add_argument("--seed", type=int, help="Base seed.")
    common.add_argument("--trials", type=int, help="Number of trials.")
    common.add_argument("--horizon", type=int, help="Selling periods T per trial.")
    common.add_argument("--workers", type=int, help="Worker processes, -1 for all cores.")
    common.add_argument("--out", type=Path, help="Output directory.")
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Simulate one episode to CSV.")
    sub.add_parser("coverage", parents=[common], help="Coverage report (JSON + CSV).")
    errors = sub.add_parser("errors", parents=[common], help="Standardized error tables.")
    errors.add_argument("--bins", type=int, default=40, help="Histogram bins.")
    diagnose = sub.add_parser(
        "diagnose", parents=[common], help="Whitening diagnostics across horizons."
    )
    diagnose.add_argument("--horizons", type=_parse_horizons, default=[500, 2000, 8000])
    return parser


def _configure_logging(verbosity):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _print_if_no_out(text, out):
    if out is None:
        sys.stdout.write(text)


def _simulate(config, args):
    seed = trial_seed(config.base_seed, 0)
    proc = ContextProcess(**config.context.to_dict())
    history = run_episode(config.model, config.policy, proc, config.T, seed)
    frame = history.to_frame()
    if args.out is None:
        sys.stdout.write(frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        write_csv(frame, args.out / "history.csv", {"config": config.to_dict(runtime=False)})


def _coverage(config, args):
    report = coverage_experiment(config)
    _print_if_no_out(report.to_json(), args.out)
    if args.out is not None:
        report.write(args.out)
        write_csv(calibration_table(report), args.out / "calibration.csv")


def _errors(config, args):
    table = error_distribution_experiment(config)
    _print_if_no_out(dumps_json(table.to_dict()), args.out)
    if args.out is not None:
        table.write(args.out)
        write_csv(histogram_table(table.frame, bins=args.bins), args.out / "errors_hist.csv")


def _diagnose(config, args):
    table = scaling_experiment(config, args.horizons)
    _print_if_no_out(dumps_json(table.to_dict()), args.out)
    if args.out is not None:
        table.write(args.out)


COMMANDS = {
    "simulate": _simulate,
    "coverage": _coverage,
    "errors": _errors,
    "diagnose": _diagnose,
}


def cli_main(argv=None) -> int:
    """
    Run one subcommand.

    Parameters
    ----------
    argv : list of str, optional
        Arguments without the program name; ``sys.argv[1:]`` when omitted.

    Returns
    -------
    code : int
        0 on success, 2 on configuration or usage errors, 3 when the
        experiment fails.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    _configure_logging(args.verbose)

    try:
        config = load_config(args.config).with_overrides(
            base_seed=args.seed, n_trials=args.trials, T=args.horizon, workers=args.workers
        )
        COMMANDS[args.command](config, args)
    except ConfigError as err:
        logger.error("%s", err)
        return EXIT_CONFIG
    except ExperimentError as err:
        logger.error("%s", err)
        return EXIT_EXPERIMENT
    return EXIT_OK


def main():
    sys.exit(cli_main())
