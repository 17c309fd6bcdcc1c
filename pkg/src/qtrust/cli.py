"""Command line entry point.

    qtrust run <config.json> --out <dir> [--seed N] [--replicates K] [--threads T]
    qtrust report <dir>... [--out <dir>]

Settings resolve as flag > environment (QTRUST_SEED, QTRUST_THREADS) > config.
Exit status: 0 ok, 1 configuration error (nothing written), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from ._io import write_json
from .config import ConfigError, ExperimentConfig, from_dict, load
from .experiments import replicate_seed, run_replicate
from .report import ReportError, build_report, format_table

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name, "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}") from None


def resolve(config_path: str, seed: int | None, replicates: int | None,
            threads: int | None) -> tuple[ExperimentConfig, int]:
    """Load the config and apply overrides; returns ``(config, threads)``."""
    cfg = load(config_path)
    raw = cfg.to_dict()
    env_seed = _env_int("QTRUST_SEED")
    if seed is not None:
        raw["seed"] = seed
    elif env_seed is not None:
        raw["seed"] = env_seed
    if replicates is not None:
        raw["replicates"] = replicates
    cfg = from_dict(raw)
    if threads is None:
        threads = _env_int("QTRUST_THREADS")
    threads = 1 if threads is None else threads
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg, threads


def _manifest(cfg: ExperimentConfig, threads: int, started: float, wall: float, out: Path) -> dict:
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    return {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "replicate_seeds": [replicate_seed(cfg.seed, i) for i in range(cfg.replicates)],
        "threads": threads,
        "kernel_backend": kernels.BACKEND,
        "versions": {
            "qtrust": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "started_at": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_time_seconds": wall,
        "files": files,
    }


def cmd_run(args) -> int:
    try:
        cfg, threads = resolve(args.config, args.seed, args.replicates, args.threads)
    except ConfigError as exc:
        print(f"qtrust: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    started = time.time()
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "config.json", cfg.to_dict())
        if cfg.experiment == "report":
            build_report(cfg.report.inputs, out / "report")
        else:
            raw = cfg.to_dict()
            indices = range(cfg.replicates)
            if threads > 1 and cfg.replicates > 1:
                with ProcessPoolExecutor(max_workers=min(threads, cfg.replicates)) as pool:
                    list(pool.map(run_replicate, [raw] * cfg.replicates, indices,
                                  [str(out)] * cfg.replicates))
            else:
                for i in indices:
                    run_replicate(raw, i, str(out))
        write_json(out / "manifest.json",
                   _manifest(cfg, threads, started, time.perf_counter() - t0, out))
    except Exception as exc:  # any failure after validation is a runtime error
        print(f"qtrust: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {cfg.replicates if cfg.experiment != 'report' else 1} result set(s) to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        tables = build_report(args.dirs, args.out)
    except ReportError as exc:
        print(f"qtrust: report error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"qtrust: report failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name, tab in tables.items():
        print(format_table(name, tab["header"], tab["rows"]))
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtrust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--replicates", type=int)
    run.add_argument("--threads", type=int, help="worker processes for replicates")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="aggregate replicate tables from finished runs")
    rep.add_argument("dirs", nargs="+")
    rep.add_argument("--out", help="write aggregated CSV/JSON here")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; those are configuration errors here
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
