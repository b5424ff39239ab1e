"""Command-line entry point: ``beamspace <subcommand> [options]``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 infeasible scenario (no link meets any threshold in the sweep).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import (
    TRACKING_SCRIPTS,
    rate_table,
    rows_to_csv,
    run_fig8,
    run_fig9_10,
    run_outage,
    run_sync_demo,
    run_tracking_scenario,
    run_training_demo,
    validate,
    validation_rows,
)

log = logging.getLogger("beamspace")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _setup_logging() -> bool:
    """Level from ``BEAMSPACE_LOG``; ``trace`` also echoes event traces to stderr."""
    raw = os.environ.get("BEAMSPACE_LOG", "warning").strip().lower()
    echo = raw == "trace"
    level = logging.DEBUG if echo else getattr(logging, raw.upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return echo


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)
    return path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--trials", type=int, help="override Monte Carlo trial count")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    p = argparse.ArgumentParser(prog="beamspace", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("rate-map", parents=[common], help="SINR/rate over offset angles")
    sub.add_parser("rate-vs-eta", parents=[common], help="aggregate rate against threshold")
    sub.add_parser("outage", parents=[common], help="outage probability, analytic and sampled")
    sub.add_parser("train", parents=[common], help="sweep rounds and combining test counts")
    t = sub.add_parser("track", parents=[common], help="cooperative tracking trace")
    t.add_argument("--script", choices=TRACKING_SCRIPTS + ("random",), help="scenario name")
    sub.add_parser("sync", parents=[common], help="synchronization cycle trace")
    v = sub.add_parser("validate", parents=[common], help="closed forms against oracles")
    v.add_argument("--instances", type=int, default=200)
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if over:
        try:
            cfg = dataclasses.replace(cfg, **over)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def main(argv: list[str] | None = None) -> int:
    echo = _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out: Path = args.out
    jobs = max(1, args.jobs)
    cmd = args.command
    trace = None

    if cmd == "rate-map":
        rows = run_fig8(cfg, jobs)
    elif cmd == "rate-vs-eta":
        rows = run_fig9_10(cfg, jobs)
    elif cmd == "outage":
        rows = run_outage(cfg, jobs)
    elif cmd == "train":
        rows, trace = run_training_demo(cfg)
    elif cmd == "track":
        rows, trace = run_tracking_scenario(cfg, args.script)
    elif cmd == "sync":
        rows, trace = run_sync_demo(cfg)
    else:
        results = validate(cfg, args.instances)
        rows = validation_rows(results)
        for r in results:
            print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.checked} checked, "
                  f"{r.failures} failed {r.detail}".rstrip())
        _write(out, "validate.csv", rows_to_csv(rows))
        return EXIT_OK if all(r.ok for r in results) else EXIT_VALIDATION

    stem = cmd.replace("-", "_")
    _write(out, f"{stem}.csv", rows_to_csv(rows))
    if trace is not None:
        _write(out, f"{stem}.trace", trace.dumps())
        if echo:
            sys.stderr.write(trace.dumps())
    if cmd == "rate-vs-eta":
        best = max(rate_table(rows, "rate_siso").values(), default=0.0)
        best = max([best] + [v for m in ("rate_ppa", "rate_apa") for v in rate_table(rows, m).values()])
        if best <= 0.0:
            print("infeasible: no link meets any threshold in the sweep", file=sys.stderr)
            return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
