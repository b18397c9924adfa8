"""
Command-line entry point.

    lowrank-pr gen    --n 100 --q 1000 --r 2 --m 100 --out inst/
    lowrank-pr run    --config experiment.json --out results/
    lowrank-pr table  --preset init-real --trials 10 --out results/
    lowrank-pr curves --preset converge-0.8n --out results/

Exit status is 0 on success, 2 for configuration errors and 1 otherwise.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from .errors import ConfigurationError
from .harness import ExperimentConfig, emit_table, emit_timing_curves, get_preset, run_experiment
from .instance_io import generate_instance, write_instance
from .logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

TABLE_PRESETS = ["init-real", "init-complex", "init-noisy"]
CURVE_PRESETS = ["converge-8n", "converge-0.8n", "converge-0.6n"]


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Seed overriding the configuration.")
    parser.add_argument("--out", type=str, default=None, help="Output directory.")
    parser.add_argument("--log-level", type=str, default="INFO", help="INFO, DEBUG, WARN or ERROR.")


def _experiment_options(parser: argparse.ArgumentParser, presets: Optional[List[str]]) -> None:
    source = parser.add_mutually_exclusive_group(required=presets is None)
    source.add_argument("--config", type=str, help="Path to a JSON experiment configuration.")
    if presets is not None:
        source.add_argument("--preset", choices=presets, help="Built-in experiment grid.")
    parser.add_argument("--threads", type=int, default=None, help="Parallel trials per grid cell.")
    parser.add_argument("--timing-mode", action="store_true", help="Run trials one at a time for fair timings.")
    parser.add_argument("--trials", type=int, default=None, help="Override the number of Monte Carlo trials.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowrank-pr", description="Low rank phase retrieval experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Write a synthetic instance and its measurements.")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--q", type=int, required=True)
    gen.add_argument("--r", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--kind", choices=["gaussian-real", "gaussian-complex", "cdp"], default="gaussian-real")
    gen.add_argument("--sharing", choices=["per-column", "shared"], default="per-column")
    gen.add_argument("--noise", type=float, default=0.0, help="Halfwidth of uniform measurement noise.")
    gen.add_argument("--cdp-dims", type=int, nargs=3, metavar=("N1", "N2", "L"), default=None)
    _common(gen)

    run = sub.add_parser("run", help="Run an experiment configuration.")
    _experiment_options(run, None)
    _common(run)

    table = sub.add_parser("table", help="Run an error-table grid.")
    _experiment_options(table, TABLE_PRESETS)
    _common(table)

    curves = sub.add_parser("curves", help="Run a convergence-curve grid.")
    _experiment_options(curves, CURVE_PRESETS)
    _common(curves)
    return parser


def _load_experiment(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_file(args.config)
    elif getattr(args, "preset", None):
        cfg = get_preset(args.preset)
    else:
        raise ConfigurationError("Either --config or --preset is required.")
    return cfg.with_overrides(
        seed=args.seed,
        threads=args.threads,
        trials=args.trials,
        timing_mode=True if args.timing_mode else None,
        output_dir=args.out,
    )


def _run(args) -> None:
    cfg = _load_experiment(args)
    out_dir = cfg.output_dir or "."
    report = run_experiment(cfg, out_dir=out_dir)
    emit_table(report, os.path.join(out_dir, "report.csv"), fmt="csv")
    emit_table(report, os.path.join(out_dir, "report.json"), fmt="json")
    if any(record.get("trace") for record in report.records):
        emit_timing_curves(report, os.path.join(out_dir, "curves.csv"))
    print(report.cell_summary().to_string(index=False))


def _gen(args) -> None:
    seed = 0 if args.seed is None else args.seed
    cdp_dims = tuple(args.cdp_dims) if args.cdp_dims else None
    gt, _, meas = generate_instance(
        args.n, args.q, args.r, args.m, kind=args.kind, sharing=args.sharing,
        noise_halfwidth=args.noise, seed=seed, cdp_dims=cdp_dims,
    )
    path = write_instance(args.out or ".", gt, meas, args.kind, args.sharing, seed, cdp_dims=cdp_dims)
    print(f"Instance written: {path}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging(args.log_level, output_dir=args.out)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "gen":
            _gen(args)
        else:
            _run(args)
    except (ConfigurationError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Error in {args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK
