"""Sweep execution: cell scheduling, deterministic merging, CSV and JSON output."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..grid import RngStream
from ..kernels import BACKEND_NAME
from ..metrics import CapacityAccumulator, RmseAccumulator
from .config import SCHEMA_VERSION, ExperimentConfig, parse_config
from .experiments import REGISTRY, RMSE, make_context

log = logging.getLogger(__name__)

CSV_COLUMNS = ("experiment", "snr_db", "metric", "value", "stderr", "trials", "wall_time_s",
               "seed")
THREADS_ENV = "OTFS_JRC_THREADS"
_DRAW_SLOT = 0xFFFF


@dataclass(frozen=True, order=True)
class Cell:
    p_index: int
    snr_index: int
    trial: int
    P: int
    snr_db: float


@dataclass
class CellResult:
    cell: Cell
    samples: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_time_s: float = 0.0


@dataclass
class RunResult:
    rows: list
    failures: list
    csv_path: Path | None
    sidecar_path: Path | None
    wall_time_s: float

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def stream_key(P: int, snr_slot: int, trial: int) -> int:
    return (int(P) << 48) | (int(snr_slot) << 32) | int(trial)


def cell_generators(seed: int, cell: Cell):
    """Scenario/frame draws depend on (P, trial) only; noise is per cell."""
    draw = RngStream(seed, stream_key(cell.P, _DRAW_SLOT, cell.trial))
    noise = RngStream(seed, stream_key(cell.P, cell.snr_index, cell.trial))
    return draw, noise


def make_cells(cfg: ExperimentConfig) -> list:
    snrs = cfg.sweep.values()
    return [Cell(pi, si, t, int(P), float(s))
            for pi, P in enumerate(cfg.scenario.paths)
            for si, s in enumerate(snrs)
            for t in range(cfg.trials)]


_CTX = {}


def _context(cfg_dict: dict):
    key = json.dumps(cfg_dict, sort_keys=True, default=str)
    if key not in _CTX:
        cfg, _ = parse_config(cfg_dict)
        _CTX.clear()
        _CTX[key] = make_context(cfg)
    return _CTX[key]


def run_cell(cfg_dict: dict, cell: Cell) -> CellResult:
    ctx = _context(cfg_dict)
    exp = REGISTRY[ctx.cfg.experiment]
    draw, noise = cell_generators(ctx.cfg.seed, cell)
    t0 = time.perf_counter()
    res = CellResult(cell)
    try:
        out = exp.trial(ctx, cell.P, cell.snr_db, draw, noise)
        if isinstance(out, tuple):
            res.samples, res.failures = out
        else:
            res.samples = out
    except Exception as exc:  # one bad cell must not stop the sweep
        log.warning("cell %s failed: %s", cell, exc)
        res.samples = []
        res.failures = [f"{type(exc).__name__}: {exc}"]
    res.wall_time_s = time.perf_counter() - t0
    return res


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring %s=%r", THREADS_ENV, raw)
        return 1


def execute(cfg: ExperimentConfig, workers: int | None = None) -> list:
    """Run every cell and return the results in cell order."""
    cells = make_cells(cfg)
    cfg_dict = cfg.to_dict()
    cfg_dict.pop("schema_version")
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(cells) <= 1:
        return [run_cell(cfg_dict, c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_cell, [cfg_dict] * len(cells), cells,
                                chunksize=max(1, len(cells) // (8 * workers))))
    return sorted(results, key=lambda r: r.cell)


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _metric_name(metric: str, P: int) -> str:
    return f"{metric}[P={P}]"


def merge(cfg: ExperimentConfig, results: list) -> tuple[list, list]:
    """Fold cell results in cell order into long-format rows."""
    snrs = cfg.sweep.values()
    groups: dict = {}
    order: list = []
    failures = []
    wall: dict = {}
    for r in results:
        gk = (r.cell.p_index, r.cell.snr_index)
        wall[gk] = wall.get(gk, 0.0) + r.wall_time_s
        for f in r.failures:
            failures.append({"P": r.cell.P, "snr_db": r.cell.snr_db, "trial": r.cell.trial,
                             "error": f})
        for s in r.samples:
            key = (gk, s.metric)
            if key not in groups:
                acc = RmseAccumulator(s.limit) if s.kind == RMSE else CapacityAccumulator()
                groups[key] = [s.kind, acc, 0]
                order.append(key)
            g = groups[key]
            g[1].add(s.values)
            g[2] += 1
    timing = cfg.harness.record_timing
    rows = []
    table: dict = {}
    first = {k: i for i, k in enumerate(order)}
    order.sort(key=lambda k: (k[0], first[k]))
    for (gk, metric) in order:
        kind, acc, trials = groups[(gk, metric)]
        pi, si = gk
        P = cfg.scenario.paths[pi]
        wt = wall[gk] if timing else None
        if kind == RMSE:
            res = acc.result()
            value, se = res.rmse, res.stderr
        else:
            res = acc.result()
            value, se = res.value, res.stderr
        rows.append((snrs[si], _metric_name(metric, P), value, se, trials, wt))
        table.setdefault((P, metric), np.full(snrs.size, np.nan))[si] = value
        if kind == RMSE and math.isfinite(acc.limit):
            rows.append((snrs[si], _metric_name(metric + "_outlier_fraction", P),
                         res.outlier_fraction, None, trials, wt))
    n_fail: dict = {}
    for f in failures:
        n_fail[(f["P"], f["snr_db"])] = n_fail.get((f["P"], f["snr_db"]), 0) + 1
    for (P, s), n in sorted(n_fail.items()):
        rows.append((s, _metric_name("failed_cells", P), float(n), None, cfg.trials, None))
    summarize = REGISTRY[cfg.experiment].summarize
    if summarize is not None:
        ctx = make_context(cfg)
        for P, metric, v in summarize(ctx, snrs, table):
            rows.append((None, _metric_name(metric, P), v, None, cfg.trials, None))
    return rows, failures


def write_csv(path: Path, cfg: ExperimentConfig, rows: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for snr, metric, value, se, trials, wt in rows:
            w.writerow((cfg.experiment, _fmt(snr), metric, _fmt(value), _fmt(se), int(trials),
                        _fmt(wt), cfg.seed))


def _git_commit() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             timeout=5, cwd=Path(__file__).parent)
    except (OSError, subprocess.SubprocessError):
        return None
    if out.returncode != 0:
        return None
    return out.stdout.strip() or None


def write_sidecar(path: Path, cfg: ExperimentConfig, failures: list, n_cells: int,
                  wall_time_s: float):
    from .. import __version__

    doc = {"schema_version": SCHEMA_VERSION, "package_version": __version__,
           "kernel_backend": BACKEND_NAME, "git_commit": _git_commit(),
           "config": cfg.to_dict(), "cells": n_cells, "failed_cells": len(failures),
           "failures": failures}
    if cfg.harness.record_timing:
        doc["wall_time_s"] = wall_time_s
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def run(cfg: ExperimentConfig, output: Path | str | None = None, workers: int | None = None,
        write: bool = True) -> RunResult:
    out = Path(output) if output else cfg.output_path()
    cfg.output = str(out)
    t0 = time.perf_counter()
    results = execute(cfg, workers)
    rows, failures = merge(cfg, results)
    wall = time.perf_counter() - t0
    csv_path = side = None
    if write:
        csv_path = out
        side = out.with_suffix(".json")
        write_csv(csv_path, cfg, rows)
        write_sidecar(side, cfg, failures, len(results), wall)
    return RunResult(rows, failures, csv_path, side, wall)
