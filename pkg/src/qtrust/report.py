"""Merge per-replicate ``table_*.csv`` files into mean/std tables.

Replicates are matched row by row on each table's key columns; every other
column is averaged. Standard deviations are population (ddof=0) so a single
replicate reports 0. Blank cells (undefined values) are skipped.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ._io import read_csv, read_json, write_csv, write_json

# file name -> key columns identifying a row
TABLES = {
    "table_classification.csv": (),
    "table_uncertainty.csv": ("metric",),
    "table_shots.csv": ("metric",),
    "table_attack.csv": ("attack",),
    "table_robustness.csv": ("attack", "epsilon"),
    "table_defense.csv": ("metric",),
    "table_federated.csv": ("method", "distribution", "epsilon_per_round", "epsilon_total"),
    "table_privacy.csv": ("setting", "epsilon_per_round", "epsilon_total"),
}


class ReportError(ValueError):
    pass


def replicate_dirs(run_dir: str | Path) -> list[Path]:
    """Replicate directories of a run, sorted by index.

    A directory holding ``table_*.csv`` files directly counts as one replicate.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ReportError(f"{run_dir}: not a directory")
    reps = sorted(p for p in run_dir.glob("replicate_*") if p.is_dir())
    if reps:
        return reps
    if any(run_dir.glob("table_*.csv")):
        return [run_dir]
    raise ReportError(f"{run_dir}: no completed replicates found")


def _experiment(run_dir: Path) -> str | None:
    cfg = run_dir / "config.json"
    if cfg.is_file():
        return read_json(cfg).get("experiment")
    return None


def _number(cell: str) -> float | None:
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        return math.nan  # non-numeric, non-key column


def aggregate_table(tables: list[list[dict]], keys: tuple[str, ...], name: str) -> tuple[list[str], list[list]]:
    columns = list(tables[0][0]) if tables[0] else list(keys)
    metrics = [c for c in columns if c not in keys]
    order: list[tuple] = []
    values: dict[tuple, dict[str, list[float]]] = {}
    for t, rows in enumerate(tables):
        if rows and list(rows[0]) != columns:
            raise ReportError(f"{name}: replicate {t} has columns {list(rows[0])}, expected {columns}")
        for row in rows:
            key = tuple(row[k] for k in keys)
            if key not in values:
                order.append(key)
                values[key] = {m: [] for m in metrics}
            for m in metrics:
                v = _number(row[m])
                if v is not None and not math.isnan(v):
                    values[key][m].append(v)
    header = [*keys]
    for m in metrics:
        header += [f"{m}_mean", f"{m}_std"]
    header.append("n")
    out = []
    for key in order:
        row = list(key)
        n = 0
        for m in metrics:
            vals = values[key][m]
            n = max(n, len(vals))
            if vals:
                row += [float(np.mean(vals)), float(np.std(vals))]
            else:
                row += [None, None]
        row.append(n)
        out.append(row)
    return header, out


def build_report(run_dirs, out_dir: str | Path | None = None) -> dict:
    """Aggregate every known table found in ``run_dirs``.

    Returns ``{table name: {"header": [...], "rows": [...]}}`` and, when
    ``out_dir`` is given, writes one CSV per table plus ``report.json``.
    """
    if not run_dirs:
        raise ReportError("no run directories given")
    experiments = {e for e in (_experiment(Path(d)) for d in run_dirs) if e is not None}
    if len(experiments) > 1:
        raise ReportError(f"cannot merge runs of different experiments: {sorted(experiments)}")
    reps = [r for d in run_dirs for r in replicate_dirs(d)]
    result = {}
    for fname, keys in TABLES.items():
        present = [r / fname for r in reps if (r / fname).is_file()]
        if not present:
            continue
        if len(present) != len(reps):
            raise ReportError(f"{fname} missing from {len(reps) - len(present)} replicate(s)")
        tables = [read_csv(p) for p in present]
        header, rows = aggregate_table(tables, keys, fname)
        result[fname[len("table_"):-len(".csv")]] = {"header": header, "rows": rows}
    if not result:
        raise ReportError("no aggregatable tables in the given runs")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, tab in result.items():
            write_csv(out_dir / f"{name}.csv", tab["header"], tab["rows"])
        write_json(out_dir / "report.json", {
            "runs": [str(d) for d in run_dirs],
            "n_replicates": len(reps),
            "tables": result,
        })
    return result


def format_table(name: str, header: list[str], rows: list[list]) -> str:
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    body = [[cell(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(header)]
    lines = [f"== {name} ==", "  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)
