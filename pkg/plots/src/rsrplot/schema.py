"""Sweep-CSV reading and aggregation.

This package is a pure view of the harness CSV: it never imports the
estimator library and never recomputes estimates.  The expected header
is replicated here as the wire contract.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import EmptyInput, SchemaError

CSV_FIELDS = (
    "preset", "trial_index", "seed", "method", "d", "n", "r_star", "epsilon",
    "sigma2", "r_hat", "r_tilde", "subspace_error", "medres_final", "gap_found",
    "capped", "runtime_ms_stage1", "runtime_ms_stage2", "runtime_ms_total",
    "medres_trace",
)

KIND_COLUMNS = {
    "line_eps": ("epsilon", "subspace_error", "method"),
    "line_noise": ("sigma2", "subspace_error", "method"),
    "line_runtime": ("r_star", "runtime_ms_total", "method"),
    "heatmap": ("epsilon", "sigma2", "r_hat", "r_star", "method"),
}


def read_rows(csv_path) -> list[dict]:
    """Rows as dicts, header validated against the experiment schema."""
    try:
        text = Path(csv_path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {csv_path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise SchemaError(f"{csv_path}: empty file") from None
    if header != CSV_FIELDS:
        raise SchemaError(
            f"{csv_path}: header does not match the experiment record schema"
        )
    rows = []
    for row in reader:
        if len(row) != len(CSV_FIELDS):
            raise SchemaError(f"{csv_path}: row with {len(row)} fields")
        rows.append(dict(zip(CSV_FIELDS, row)))
    return rows


def require_columns(kind: str):
    if kind not in KIND_COLUMNS:
        raise SchemaError(f"unknown plot kind: {kind}")
    return KIND_COLUMNS[kind]


def mean_std_by(rows, x_col: str, y_col: str, group_col: str = "method"):
    """Per (group, x) mean and population std of the y column.

    Rows with an empty y field are dropped.  Values are aggregated in
    file order, so the numbers are bit-identical to any other consumer
    using the same summation (numpy mean/std over the same rows).
    """
    buckets: dict[tuple, list] = {}
    for r in rows:
        if r[y_col] == "":
            continue
        key = (r[group_col], float(r[x_col]))
        buckets.setdefault(key, []).append(float(r[y_col]))
    if not buckets:
        raise EmptyInput(f"no rows with non-empty {y_col!r}")
    out = {}
    for (g, x), vals in buckets.items():
        a = np.asarray(vals)
        out.setdefault(g, {})[x] = (float(a.mean()), float(a.std()))
    return out


def ratio_grid(rows):
    """Per (epsilon, sigma2) mean of r_hat / r_star over two-stage rows."""
    buckets: dict[tuple, list] = {}
    for r in rows:
        if r["method"] != "ransac_plus" or r["r_hat"] == "":
            continue
        key = (float(r["epsilon"]), float(r["sigma2"]))
        buckets.setdefault(key, []).append(float(r["r_hat"]) / float(r["r_star"]))
    if not buckets:
        raise EmptyInput("no two-stage rows with a recorded rank estimate")
    return {k: float(np.mean(v)) for k, v in buckets.items()}
