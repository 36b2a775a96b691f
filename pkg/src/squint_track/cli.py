"""Command-line entry point: ``squint-track <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .errors import ConfigError
from .harness import ExperimentSpec, classify_command, load_spec, run_experiment, write_results

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3

COMMAND_STAGES = {
    "track-uplink": ("uplink",),
    "track-downlink": ("uplink", "downlink"),
    "ekf": ("ekf",),
    "sweep": ("uplink", "downlink", "ekf"),
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squint-track",
        description="Simulate and track wideband massive-MIMO UAV channels with Doppler and beam squint.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="report the selectivity class of a configuration")
    p.add_argument("--config", help="experiment JSON (system section is used)")
    p.add_argument("--f-d-max", type=float, default=0.0, help="largest Doppler shift in Hz")

    for name in COMMAND_STAGES:
        p = sub.add_parser(name, help=f"run the {name} experiment over the configured grids")
        p.add_argument("--config", help="experiment JSON; defaults are used when omitted")
        p.add_argument("--seed", type=_u64, help="override the spec seed")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--trials", type=_positive, help="override n_trials")
        p.add_argument("--no-noise", action="store_true", help="replace the SNR grid by noiseless runs")
    return parser


def _spec(args) -> ExperimentSpec:
    spec = load_spec(args.config) if args.config else ExperimentSpec()
    changes = {"stages": COMMAND_STAGES[args.command]}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["n_trials"] = args.trials
    if args.no_noise:
        changes["snr_grid_db"] = [float("inf")]
    return dataclasses.replace(spec, **changes)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "classify":
            spec = load_spec(args.config) if args.config else ExperimentSpec()
            print(classify_command(spec.system, args.f_d_max))
            return EXIT_OK
        spec = _spec(args)
        result = run_experiment(spec)
        paths = write_results(result, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in paths.values():
        print(path)
    if result.failed_trials:
        print(f"{result.failed_trials} trial(s) failed; see metrics.csv", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
