"""Command-line entry point: ``bayesmarx verify|validate|stream|simulate``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .distributions import NotPositiveDefiniteError
from .harness import (
    ConfigError,
    DataError,
    ExperimentConfig,
    run_stream,
    run_validation,
    run_verification,
    simulate_marx,
    simulate_msd,
)
from .simulators import gen_true_coefficients, run_seed, write_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

logger = logging.getLogger("bayesmarx")


def _train_sizes(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --train-sizes {text!r}") from None


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="bayesmarx", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML or JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--n-mc", type=int, help="number of Monte Carlo runs")
    common.add_argument("--train-sizes", type=_train_sizes, help="comma-separated, ascending")
    common.add_argument("--n-jobs", type=int, help="parallel workers")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=["json", "csv"])

    sub.add_parser("verify", parents=[common], help="synthetic MARX plant experiment")
    sub.add_parser("validate", parents=[common], help="mass-spring-damper experiment")
    p = sub.add_parser("stream", parents=[common], help="run MARX over a trajectory CSV")
    p.add_argument("input_csv")
    p.add_argument("--prior", help="name of the prior in the config to use")
    p = sub.add_parser("simulate", parents=[common], help="export a simulated trajectory CSV")
    p.add_argument("plant", choices=["marx", "msd"])
    p.add_argument("--steps", type=int, default=200)
    return parser


def _config(args, experiment):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg.experiment = experiment
    for attr, value in (
        ("master_seed", args.seed),
        ("n_mc", args.n_mc),
        ("train_sizes", args.train_sizes),
        ("n_jobs", args.n_jobs),
        ("out", args.out),
        ("format", args.format),
    ):
        if value is not None:
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "simulate":
            cfg = _config(args, "validation" if args.plant == "msd" else "verification")
            rng = np.random.default_rng(run_seed(cfg.master_seed, 0))
            if args.plant == "marx":
                truth = gen_true_coefficients(
                    cfg.n_y, cfg.n_u, cfg.d_y, cfg.d_u, np.asarray(cfg.W_true),
                    cutoff_hz=cfg.cutoff_hz, sample_rate_hz=cfg.sample_rate_hz,
                    cross_std=cfg.cross_std, random_state=rng,
                )
                Y, U = simulate_marx(truth, args.steps, cfg.input_signal(), rng)
            else:
                Y, U = simulate_msd(
                    cfg.msd_params(), args.steps, cfg.input_signal(), cfg.msd_noise_precision, rng
                )
            write_trajectory(cfg.out or sys.stdout, Y, U)
            return EXIT_OK

        experiment = {"verify": "verification", "validate": "validation", "stream": "stream"}[
            args.command
        ]
        cfg = _config(args, experiment)
        if args.command == "verify":
            report = run_verification(cfg)
        elif args.command == "validate":
            report = run_validation(cfg)
        else:
            report = run_stream(cfg, args.input_csv, prior=args.prior)
        _emit(report.to_json() if cfg.format == "json" else report.to_csv(), cfg.out)
        return EXIT_OK
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except (NotPositiveDefiniteError, np.linalg.LinAlgError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
