"""Reconstruction error metrics, error maps and the aggregate CSV table."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .grid import ScalarField

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment", "sensor_count", "split", "metric", "mean", "sd", "n")


def _vals(f):
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=np.float64)


def _masked(truth, pred, mask):
    t, p = _vals(truth), _vals(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    if mask is None:
        return t.ravel(), p.ravel()
    mask = np.asarray(mask)
    if mask.shape != t.shape:
        raise ValueError(f"mask shape {mask.shape} != {t.shape}")
    sel = mask == 1
    return t[sel], p[sel]


def relative_l2(truth, pred, mask=None) -> float:
    """||truth - pred||_2 / ||truth||_2 over the masked pixels."""
    t, p = _masked(truth, pred, mask)
    denom = _norm(t)
    if denom == 0:
        raise ValueError("truth has zero norm over the mask")
    return _norm(t - p) / denom


def _norm(x) -> float:
    # scale by the peak first so tiny or huge values neither underflow nor overflow
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak == 0:
        return 0.0
    return peak * float(np.linalg.norm(x / peak))


def rmse(truth, pred, mask=None) -> float:
    t, p = _masked(truth, pred, mask)
    if t.size == 0:
        raise ValueError("mask selects no pixels")
    d = t - p
    return math.sqrt(float(np.sum(d * d)) / t.size)


def error_map(truth, pred) -> ScalarField:
    t, p = _vals(truth), _vals(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    return ScalarField((t - p) ** 2)


def scaled_error_map(truth, pred, cap: float, gamma: float) -> ScalarField:
    """Squared error capped at ``cap``, scaled to [0, 1] and raised to ``gamma``."""
    if not (cap > 0 and gamma > 0):
        raise ValueError("cap and gamma must be positive")
    err = error_map(truth, pred).values
    return ScalarField((np.minimum(err, cap) / cap) ** gamma)


def average_error_map(pairs) -> ScalarField:
    """Per-pixel RMSE across (truth, pred) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("average_error_map needs at least one pair")
    total = None
    for truth, pred in pairs:
        e = error_map(truth, pred).values
        if total is not None and e.shape != total.shape:
            raise ValueError("pairs have differing shapes")
        total = e.copy() if total is None else total + e
    return ScalarField(np.sqrt(total / len(pairs)))


@dataclass(frozen=True)
class ErrorRecord:
    experiment: str
    sensor_count: int
    split: str
    seed: int
    metric: str
    value: float


@dataclass(frozen=True)
class TableRow:
    experiment: str
    sensor_count: int
    split: str
    metric: str
    mean: float
    sd: float
    n: int


def aggregate_table(records: Iterable[ErrorRecord], expected_seeds: Optional[int] = None) -> list[TableRow]:
    """Mean and population standard deviation over seeds per (experiment, count, split, metric) cell.

    Cells with fewer than ``expected_seeds`` entries are logged as incomplete.
    """
    cells = defaultdict(list)
    for r in records:
        cells[(r.experiment, r.sensor_count, r.split, r.metric)].append(r.value)
    rows = []
    for key in sorted(cells, key=lambda k: (k[0], k[2], k[1], k[3])):
        vals = np.asarray(cells[key], dtype=np.float64)
        if len(vals) == 1:
            log.warning("cell %s has a single seed; sd reported as 0", key)
        if expected_seeds is not None and len(vals) < expected_seeds:
            log.warning("cell %s has %d of %d seeds", key, len(vals), expected_seeds)
        rows.append(TableRow(*key, float(vals.mean()), float(vals.std()), len(vals)))
    return rows


def missing_cells(rows: Iterable[TableRow], experiments, splits: dict, metrics) -> list[tuple]:
    """Expected (experiment, count, split, metric) cells absent from ``rows``.

    ``splits`` maps split name to the sensor counts expected under it.
    """
    have = {(r.experiment, r.sensor_count, r.split, r.metric) for r in rows}
    return [
        (e, c, s, m)
        for e in experiments
        for s, cs in splits.items()
        for c in cs
        for m in metrics
        if (e, c, s, m) not in have
    ]


def table_csv(rows: Iterable[TableRow]) -> str:
    buf = io.StringIO()
    buf.write("# sd is the population standard deviation over placement seeds\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.experiment, r.sensor_count, r.split, r.metric, repr(r.mean), repr(r.sd), r.n])
    return buf.getvalue()


def read_table_csv(text: str) -> list[TableRow]:
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    reader = csv.DictReader(lines)
    return [
        TableRow(d["experiment"], int(d["sensor_count"]), d["split"], d["metric"], float(d["mean"]), float(d["sd"]), int(d["n"]))
        for d in reader
    ]
