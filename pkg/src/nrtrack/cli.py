"""Command-line interface.

    nrtrack simulate --config scenario.toml --seed 7 --out results/
    nrtrack metrics --in results/

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, SimConfig, load_config, MODES
from .harness import export_records, metrics_from_csv, run_simulation, summary_rows


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrtrack",
        description="5G NR synchronization-signal train positioning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an end-to-end simulation")
    sim.add_argument("--config", help="TOML scenario file (omit for the default scenario)")
    sim.add_argument("--seed", type=int, required=True, help="master RNG seed (u64)")
    sim.add_argument("--out", required=True, help="output directory for CSV artifacts")
    sim.add_argument("--mode", choices=MODES, help="measurement rows used by the tracker")
    sim.add_argument("--epochs", type=int, help="override the number of 100 ms epochs")
    sim.add_argument("--track-length", type=float, help="override the track length (m)")
    sim.add_argument("--workers", type=int, help="parallel workers for epoch synthesis")

    met = sub.add_parser("metrics", help="recompute summary statistics from CSVs")
    met.add_argument("--in", dest="in_dir", required=True, help="directory with epochs.csv")
    return parser


def _cmd_simulate(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = SimConfig()
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.epochs is not None:
        overrides["num_epochs"] = args.epochs
    if args.track_length is not None:
        overrides["track_length"] = args.track_length
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = SimConfig(**{**cfg.to_dict(), **overrides})
    if args.seed < 0:
        raise ConfigError("--seed must be a non-negative integer")
    records, summary = run_simulation(cfg, args.seed)
    paths = export_records(records, summary, args.out)
    print(f"wrote {paths['epochs']}, {paths['measurements']}, {paths['summary']}")
    for name, value in summary_rows(summary):
        print(f"{name}: {value:.9g}" if isinstance(value, float) else f"{name}: {value}")
    return 0


def _cmd_metrics(args) -> int:
    summary = metrics_from_csv(args.in_dir)
    print("metric,value")
    for name, value in summary_rows(summary):
        print(f"{name},{value:.9g}" if isinstance(value, float) else f"{name},{value}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_metrics(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
