"""Figure rendering: line plots with error bands, rank-ratio heatmap.

Output is deterministic for a fixed toolchain: the Agg backend, fixed
figure geometry, no timestamps or hash-salted ids in the files.  The
annotations drawn on the figure are also returned numerically so
callers can cross-check them against summary aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import EmptyInput, SchemaError
from .schema import mean_std_by, ratio_grid, read_rows, require_columns

plt.rcParams["svg.hashsalt"] = "rsr-plot"

_X_LABEL = {
    "line_eps": "corruption fraction",
    "line_noise": "noise variance",
    "line_runtime": "planted dimension",
}
_Y_COL = {
    "line_eps": "subspace_error",
    "line_noise": "subspace_error",
    "line_runtime": "runtime_ms_total",
}
_X_COL = {
    "line_eps": "epsilon",
    "line_noise": "sigma2",
    "line_runtime": "r_star",
}
_Y_LABEL = {
    "line_eps": "subspace error",
    "line_noise": "subspace error",
    "line_runtime": "wall time (ms)",
}


@dataclass(frozen=True)
class PlotSpec:
    input_csv: str
    kind: str  # {"line_eps", "line_noise", "line_runtime", "heatmap"}
    out_path: str
    group_by: str = "method"
    log_y: bool = False


@dataclass
class RenderResult:
    out_path: Path
    # exact floats behind every annotation drawn on the figure
    annotations: dict = field(default_factory=dict)


def _save(fig, out_path: Path):
    suffix = out_path.suffix.lower()
    if suffix == ".svg":
        fig.savefig(out_path, metadata={"Date": None})
    elif suffix == ".png":
        fig.savefig(out_path, metadata={"Software": None})
    else:
        raise SchemaError(f"unsupported image format: {suffix or '(none)'}")
    plt.close(fig)


def _render_lines(spec: PlotSpec, rows) -> RenderResult:
    x_col, y_col = _X_COL[spec.kind], _Y_COL[spec.kind]
    series = mean_std_by(rows, x_col, y_col, spec.group_by)

    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    extremes = []
    for name in sorted(series):
        pts = sorted(series[name].items())
        xs = np.array([p[0] for p in pts])
        means = np.array([p[1][0] for p in pts])
        stds = np.array([p[1][1] for p in pts])
        ax.plot(xs, means, marker="o", label=name)
        ax.fill_between(xs, means - stds, means + stds, alpha=0.2)
        for x, m in zip(xs, means):
            extremes.append((m, name, float(x)))
    lo = min(extremes)
    hi = max(extremes)
    for val, name, x in (lo, hi):
        ax.annotate(
            f"{val:.6g}", (x, val), textcoords="offset points", xytext=(0, 8),
            fontsize=8, ha="center",
        )
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(_X_LABEL[spec.kind])
    ax.set_ylabel(_Y_LABEL[spec.kind])
    ax.legend()
    fig.tight_layout()
    out = Path(spec.out_path)
    _save(fig, out)
    return RenderResult(
        out,
        annotations={
            "max": {"group": hi[1], "x": hi[2], "value": hi[0]},
            "min": {"group": lo[1], "x": lo[2], "value": lo[0]},
        },
    )


def _render_heatmap(spec: PlotSpec, rows) -> RenderResult:
    grid = ratio_grid(rows)
    eps_vals = sorted({k[0] for k in grid})
    sig_vals = sorted({k[1] for k in grid})
    M = np.full((len(sig_vals), len(eps_vals)), np.nan)
    for (e, s), v in grid.items():
        M[sig_vals.index(s), eps_vals.index(e)] = v

    fig, ax = plt.subplots(figsize=(6.4, 5.0), dpi=120)
    im = ax.imshow(M, origin="lower", aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="mean rank overestimation")
    ax.set_xticks(range(len(eps_vals)), [f"{e:g}" for e in eps_vals])
    ax.set_yticks(range(len(sig_vals)), [f"{s:g}" for s in sig_vals])
    ax.set_xlabel("corruption fraction")
    ax.set_ylabel("noise variance")
    cells = {}
    for (e, s), v in grid.items():
        ax.text(
            eps_vals.index(e), sig_vals.index(s), f"{v:.6g}",
            ha="center", va="center", fontsize=7,
            color="white" if v < np.nanmax(M) * 0.75 else "black",
        )
        cells[(e, s)] = v
    best = max(grid.items(), key=lambda kv: kv[1])
    fig.tight_layout()
    out = Path(spec.out_path)
    _save(fig, out)
    return RenderResult(
        out,
        annotations={
            "cells": cells,
            "max": {"epsilon": best[0][0], "sigma2": best[0][1], "value": best[1]},
        },
    )


def render(spec: PlotSpec) -> RenderResult:
    """Render one figure from a sweep CSV; returns the annotation values."""
    cols = require_columns(spec.kind)
    rows = read_rows(spec.input_csv)
    if not rows:
        raise EmptyInput(f"{spec.input_csv}: no data rows")
    missing = [c for c in cols if c not in rows[0]]
    if missing:
        raise SchemaError(f"missing columns for {spec.kind}: {missing}")
    if spec.kind == "heatmap":
        return _render_heatmap(spec, rows)
    return _render_lines(spec, rows)
