"""Experiment harness: presets, seeded sweeps, CSV records, summaries.

Every record's seed derives from (master_seed, cell_index, trial_index)
with the documented mixer, so any row can be replayed in isolation.
Grid cells enumerate the cartesian product r_stars x epsilons x sigma2s
in row-major order.  All methods in a cell/trial share one dataset.

BLAS pools are pinned to one thread for the duration of a sweep; with
that, output bytes are independent of the worker count (wall-time
columns excepted, see ``timing``).
"""

from __future__ import annotations

import csv
import io
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .baselines import ClassicRansacConfig, classic_ransac, default_dist_threshold, oracle_pca
from .core import subspace_distance
from .datagen import AdversaryStrategy, NoiseModel, make_dataset, random_clean_model
from .errors import ConfigError, IoError, RsrError, SchemaError
from .pipeline import RansacPlusConfig, ransac_plus
from .rngutil import mix64
from .stage1 import Stage1Config
from .stage2 import Stage2Config

METHODS = ("ransac_plus", "classic_ransac", "oracle_pca")
PRESETS = (
    "fig1_eps_sweep",
    "fig2_dim_misspec",
    "fig2_noise_sweep",
    "fig2_runtime",
    "fig4_heatmap",
    "custom",
)

CSV_FIELDS = (
    "preset", "trial_index", "seed", "method", "d", "n", "r_star", "epsilon",
    "sigma2", "r_hat", "r_tilde", "subspace_error", "medres_final", "gap_found",
    "capped", "runtime_ms_stage1", "runtime_ms_stage2", "runtime_ms_total",
    "medres_trace",
)


@dataclass(frozen=True)
class GridSpec:
    d: int
    n: int
    r_stars: tuple
    epsilons: tuple
    sigma2s: tuple

    def __post_init__(self):
        for name in ("r_stars", "epsilons", "sigma2s"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ConfigError(f"grid list {name} is empty")
            object.__setattr__(self, name, tuple(vals))
        if self.d < 2 or self.n < 4:
            raise ConfigError("need d >= 2 and n >= 4")

    def cells(self):
        return list(itertools.product(self.r_stars, self.epsilons, self.sigma2s))


@dataclass(frozen=True)
class BaselineSpec:
    r_offset: int = 0
    consensus_fraction: float = 0.5
    max_iters: int = 50000
    dist_threshold: float | None = None  # None: noise-calibrated default


@dataclass(frozen=True)
class ExperimentSpec:
    preset: str
    grid: GridSpec
    trials: int
    master_seed: int
    methods: tuple
    output_path: str | None = None
    stage1: Stage1Config = Stage1Config()
    stage2: Stage2Config = Stage2Config()
    baseline: BaselineSpec = BaselineSpec()
    adversary: AdversaryStrategy = AdversaryStrategy(
        kind="orthogonal_lowrank", rank=2, scale=10.0
    )
    center: str = "none"
    timing: str = "wall"  # "wall" | "none" (deterministic bytes)
    threads: int = 1

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset: {self.preset}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods: {bad}")
        if not self.methods:
            raise ConfigError("methods list is empty")
        if self.timing not in ("wall", "none"):
            raise ConfigError(f"timing must be wall or none, got {self.timing}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def row_count(self) -> int:
        return len(self.grid.cells()) * self.trials * len(self.methods)


def preset_spec(name: str) -> ExperimentSpec:
    """Built-in experiment definitions at desk scale.

    The epsilon-sweep and noise-sweep presets carry tuned stage-2
    sizing (fixed batch width, small delta, raised batch-count cap):
    the sized defaults keep every batch inlier-majority at eps <= 0.1
    but starve the all-inlier-batch event beyond that, while the tuned
    width keeps that event alive through eps = 0.3 at desk scale.
    """
    if name == "fig1_eps_sweep":
        return ExperimentSpec(
            preset=name,
            grid=GridSpec(100, 500, (10,), (0.0, 0.1, 0.2, 0.3, 0.4), (0.0,)),
            trials=20,
            master_seed=20240829,
            methods=("ransac_plus", "classic_ransac"),
            stage2=Stage2Config(
                C_prime=2.9, delta=0.005, T_cap=4_500_000, B_override=34
            ),
            baseline=BaselineSpec(r_offset=1),
        )
    if name == "fig2_dim_misspec":
        return ExperimentSpec(
            preset=name,
            grid=GridSpec(100, 500, (5, 8, 10, 15), (0.2,), (0.0,)),
            trials=10,
            master_seed=20240829,
            methods=("ransac_plus", "classic_ransac"),
            stage2=Stage2Config(C_prime=2.9, delta=0.005, T_cap=1_500_000),
            baseline=BaselineSpec(r_offset=1),
        )
    if name == "fig2_noise_sweep":
        return ExperimentSpec(
            preset=name,
            grid=GridSpec(
                100, 500, (10,), (0.2,), (0.0001, 0.0004, 0.0016, 0.0064)
            ),
            trials=20,
            master_seed=20240829,
            methods=("ransac_plus", "classic_ransac"),
            stage2=Stage2Config(
                C_prime=2.9, delta=0.05, T_cap=500_000, B_override=47
            ),
            baseline=BaselineSpec(r_offset=0),
        )
    if name == "fig2_runtime":
        return ExperimentSpec(
            preset=name,
            grid=GridSpec(1000, 500, (5, 10, 20, 40), (0.2,), (0.0,)),
            trials=3,
            master_seed=20240829,
            methods=("ransac_plus", "classic_ransac"),
            baseline=BaselineSpec(r_offset=0),
        )
    if name == "fig4_heatmap":
        return ExperimentSpec(
            preset=name,
            grid=GridSpec(
                100, 500, (10,),
                (0.0, 0.075, 0.15, 0.225, 0.3),
                (0.0, 0.0125, 0.025, 0.0375, 0.05),
            ),
            trials=20,
            master_seed=20240829,
            methods=("ransac_plus",),
        )
    if name == "custom":
        return ExperimentSpec(
            preset=name,
            grid=GridSpec(100, 500, (10,), (0.2,), (0.0,)),
            trials=1,
            master_seed=0,
            methods=("ransac_plus",),
        )
    raise ConfigError(f"unknown preset: {name}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_trace(trace) -> str:
    return ";".join(f"{B}:{repr(float(mr))}" for B, mr in trace)


@dataclass
class ExperimentRecord:
    """One harness trial; empty fields serialize as empty strings."""

    preset: str
    trial_index: int
    seed: int
    method: str
    d: int
    n: int
    r_star: int
    epsilon: float
    sigma2: float
    r_hat: int | None = None
    r_tilde: int | None = None
    subspace_error: float | None = None
    medres_final: float | None = None
    gap_found: bool | None = None
    capped: bool | None = None
    runtime_ms_stage1: int | None = None
    runtime_ms_stage2: int | None = None
    runtime_ms_total: int | None = None
    medres_trace: str = ""

    def to_row(self) -> list:
        return [_fmt(getattr(self, f)) for f in CSV_FIELDS]


def _run_cell_trial(spec: ExperimentSpec, cell_index: int, cell, trial: int):
    r_star, epsilon, sigma2 = cell
    g = spec.grid
    seed = mix64(spec.master_seed, cell_index, trial)
    model = random_clean_model(g.d, r_star, np.ones(r_star), seed)
    noise = NoiseModel.isotropic(sigma2, g.d) if sigma2 > 0 else NoiseModel.zero()
    ds = make_dataset(model, noise, spec.adversary, epsilon, g.n, seed)

    records = []
    for method in spec.methods:
        rec = ExperimentRecord(
            preset=spec.preset, trial_index=trial, seed=seed, method=method,
            d=g.d, n=g.n, r_star=r_star, epsilon=epsilon, sigma2=sigma2,
        )
        t0 = time.monotonic()
        try:
            if method == "ransac_plus":
                cfg = RansacPlusConfig(spec.stage1, spec.stage2, spec.center)
                res = ransac_plus(ds.X, noise, epsilon, cfg, seed)
                rec.r_hat = res.r_hat
                rec.r_tilde = res.r_tilde
                rec.subspace_error = subspace_distance(res.basis, model.U_star)
                rec.medres_final = res.stage1_trace.medres_final
                rec.gap_found = res.stage2_trace.gap_found
                rec.capped = res.stage2_trace.capped
                rec.medres_trace = _fmt_trace(res.stage1_trace.medres_trace)
                if spec.timing == "wall":
                    rec.runtime_ms_stage1 = res.wall_times.stage1_ms
                    rec.runtime_ms_stage2 = res.wall_times.stage2_ms
                    rec.runtime_ms_total = res.wall_times.total_ms
            elif method == "classic_ransac":
                b = spec.baseline
                thr = (
                    b.dist_threshold
                    if b.dist_threshold is not None
                    else default_dist_threshold(ds.X, noise)
                )
                cfg = ClassicRansacConfig(
                    r=r_star + b.r_offset, dist_threshold=thr,
                    consensus_fraction=b.consensus_fraction,
                    max_iters=b.max_iters, seed=seed,
                )
                basis, _count = classic_ransac(ds.X, cfg)
                rec.subspace_error = subspace_distance(basis, model.U_star)
                if spec.timing == "wall":
                    rec.runtime_ms_total = int((time.monotonic() - t0) * 1000)
            elif method == "oracle_pca":
                basis = oracle_pca(ds.X, ds.inlier_mask, r_star)
                rec.subspace_error = subspace_distance(basis, model.U_star)
                if spec.timing == "wall":
                    rec.runtime_ms_total = int((time.monotonic() - t0) * 1000)
        except RsrError:
            pass  # failure rows keep identity fields, numerics stay empty
        records.append(rec)
    return records


def run_experiment(spec: ExperimentSpec, output_path=None):
    """Execute the sweep, write the CSV, return the records.

    Records are emitted in canonical (cell, trial, method) order and
    flushed as soon as their canonical predecessors are written, so an
    interrupted sweep leaves a valid prefix on disk.
    """
    out = output_path if output_path is not None else spec.output_path
    cells = spec.grid.cells()
    tasks = [(ci, cell, t) for ci, cell in enumerate(cells) for t in range(spec.trials)]

    fh = None
    writer = None
    if out is not None:
        try:
            fh = open(out, "w", newline="")
        except OSError as exc:
            raise IoError(f"cannot write CSV to {out}: {exc}") from exc
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        fh.flush()

    all_records: list[ExperimentRecord] = []
    try:
        with threadpool_limits(limits=1):
            if spec.threads == 1:
                results = (
                    _run_cell_trial(spec, ci, cell, t) for ci, cell, t in tasks
                )
                for recs in results:
                    all_records.extend(recs)
                    if writer is not None:
                        for r in recs:
                            writer.writerow(r.to_row())
                        fh.flush()
            else:
                with ThreadPoolExecutor(max_workers=spec.threads) as pool:
                    futures = [
                        pool.submit(_run_cell_trial, spec, ci, cell, t)
                        for ci, cell, t in tasks
                    ]
                    done: dict[int, list] = {}
                    next_write = 0
                    for i, fut in enumerate(futures):
                        done[i] = fut.result()
                        while next_write in done:
                            recs = done.pop(next_write)
                            all_records.extend(recs)
                            if writer is not None:
                                for r in recs:
                                    writer.writerow(r.to_row())
                                fh.flush()
                            next_write += 1
    finally:
        if fh is not None:
            fh.close()
    return all_records


def replay_record(spec: ExperimentSpec, record: "ExperimentRecord | dict"):
    """Re-run one record's (cell, trial, method) in isolation.

    The record's own seed and cell parameters fully determine the
    dataset and the estimate, so the reproduced subspace_error matches
    the sweep's byte for byte.
    """
    get = record.get if isinstance(record, dict) else lambda k: getattr(record, k)
    cell = (int(get("r_star")), float(get("epsilon")), float(get("sigma2")))
    cells = spec.grid.cells()
    try:
        ci = cells.index(cell)
    except ValueError as exc:
        raise ConfigError(f"record cell {cell} not in spec grid") from exc
    sub = replace(spec, methods=(get("method"),))
    with threadpool_limits(limits=1):
        recs = _run_cell_trial(sub, ci, cell, int(get("trial_index")))
    return recs[0]


# --- config-file parsing ------------------------------------------------------

_SECTIONS = ("experiment", "stage1", "stage2", "baseline")

_EXPERIMENT_KEYS = {
    "preset": str, "trials": int, "master_seed": int, "methods": "strlist",
    "out": str, "epsilons": "floatlist", "sigma2s": "floatlist",
    "r_stars": "intlist", "d": int, "n": int, "timing": str, "threads": int,
    "adversary": str, "adversary_rank": int, "adversary_scale": float,
    "center": str,
}
_STAGE1_KEYS = {
    "C": float, "t0": float, "eta_floor": float, "rank_tol": float,
    "r_star_hint": int, "initial_B": int,
}
_STAGE2_KEYS = {
    "C_prime": float, "delta": float, "epsilon": float, "T_cap": int,
    "B_override": int, "normalize_spectra": "bool", "spectra_cap": int,
}
_BASELINE_KEYS = {
    "r_offset": int, "consensus_fraction": float, "max_iters": int,
    "dist_threshold": float,
}
_KEYTABLES = {
    "experiment": _EXPERIMENT_KEYS, "stage1": _STAGE1_KEYS,
    "stage2": _STAGE2_KEYS, "baseline": _BASELINE_KEYS,
}


def _convert(raw: str, kind, key: str, lineno: int):
    try:
        if kind is str:
            return raw
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "strlist":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind == "floatlist":
            return tuple(float(s) for s in raw.split(",") if s.strip())
        if kind == "intlist":
            return tuple(int(s) for s in raw.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"line {lineno}: unhandled key kind for {key!r}")


def parse_config(path) -> ExperimentSpec:
    """Read a line-based key=value config with [sections].

    Sections: [experiment], [stage1], [stage2], [baseline].  Unknown
    sections or keys are rejected; a duplicate key reports both line
    numbers.  The preset (default ``custom``) supplies every value not
    set explicitly.  A documented sanity bound rejects corruption
    fractions above 0.5 at parse time.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    section = "experiment"
    values: dict[str, dict[str, tuple]] = {s: {} for s in _SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            section = name
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        table = _KEYTABLES[section]
        if key not in table:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in values[section]:
            first = values[section][key][1]
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} in [{section}] "
                f"(first set on line {first})"
            )
        values[section][key] = (_convert(raw, table[key], key, lineno), lineno)

    exp = {k: v for k, (v, _ln) in values["experiment"].items()}
    spec = preset_spec(exp.pop("preset", "custom"))

    grid_kwargs = {}
    for src, dst in (("epsilons", "epsilons"), ("sigma2s", "sigma2s"),
                     ("r_stars", "r_stars"), ("d", "d"), ("n", "n")):
        if src in exp:
            grid_kwargs[dst] = exp.pop(src)
    if grid_kwargs:
        g = spec.grid
        spec = replace(spec, grid=replace(g, **grid_kwargs))

    adv_kind = exp.pop("adversary", None)
    adv_rank = exp.pop("adversary_rank", None)
    adv_scale = exp.pop("adversary_scale", None)
    if adv_kind is not None or adv_rank is not None or adv_scale is not None:
        adv = spec.adversary
        spec = replace(
            spec,
            adversary=AdversaryStrategy(
                kind=adv_kind if adv_kind is not None else adv.kind,
                rank=adv_rank if adv_rank is not None else adv.rank,
                scale=adv_scale if adv_scale is not None else adv.scale,
            ),
        )

    renames = {"out": "output_path"}
    direct = {renames.get(k, k): v for k, v in exp.items()}
    if direct:
        spec = replace(spec, **direct)

    for sec_name, cfg_cls, attr in (
        ("stage1", Stage1Config, "stage1"),
        ("stage2", Stage2Config, "stage2"),
        ("baseline", BaselineSpec, "baseline"),
    ):
        overrides = {k: v for k, (v, _ln) in values[sec_name].items()}
        if overrides:
            try:
                spec = replace(spec, **{attr: replace(getattr(spec, attr), **overrides)})
            except ValueError as exc:
                raise ConfigError(f"[{sec_name}]: {exc}") from exc

    for eps in spec.grid.epsilons:
        if not 0.0 <= eps <= 0.5:
            raise ConfigError(
                f"epsilon {eps} outside the supported range [0, 0.5] "
                "(sanity bound; the sizing formula degrades beyond one half)"
            )
    return spec


# --- summaries ----------------------------------------------------------------

SUMMARY_FIELDS = (
    "preset", "method", "d", "n", "r_star", "epsilon", "sigma2", "count",
    "failed", "subspace_error_mean", "subspace_error_std", "r_hat_ratio_mean",
    "r_hat_ratio_std", "r_tilde_mean", "runtime_ms_stage1_mean",
    "runtime_ms_stage2_mean", "runtime_ms_total_mean",
)


def summary_path_for(csv_path) -> Path:
    p = Path(csv_path)
    stem = p.name[:-4] if p.name.endswith(".csv") else p.name
    return p.with_name(stem + ".summary.csv")


def _mean_std(values):
    if not values:
        return None, None
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())  # population std: single row -> 0


def report_summary(csv_path, out_path=None) -> Path:
    """Aggregate a sweep CSV by (preset, method, grid cell).

    Means and population standard deviations are taken over rows whose
    field is non-empty; ``failed`` counts rows with no subspace_error.
    The summary lands next to the input with the ``.summary.csv``
    suffix unless ``out_path`` says otherwise.
    """
    p = Path(csv_path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {csv_path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{csv_path}: empty file") from None
    if tuple(header) != CSV_FIELDS:
        raise SchemaError(
            f"{csv_path}: header does not match the experiment schema; "
            f"got {header[:6]}..."
        )
    col = {name: i for i, name in enumerate(CSV_FIELDS)}

    groups: dict[tuple, list] = {}
    for row in reader:
        if len(row) != len(CSV_FIELDS):
            raise SchemaError(f"{csv_path}: row with {len(row)} fields")
        key = tuple(row[col[k]] for k in
                    ("preset", "method", "d", "n", "r_star", "epsilon", "sigma2"))
        groups.setdefault(key, []).append(row)

    out = summary_path_for(p) if out_path is None else Path(out_path)
    try:
        fh = open(out, "w", newline="")
    except OSError as exc:
        raise IoError(f"cannot write summary to {out}: {exc}") from exc
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for key, rows in groups.items():
            preset, method, d, n, r_star, epsilon, sigma2 = key
            errs = [float(r[col["subspace_error"]]) for r in rows
                    if r[col["subspace_error"]] != ""]
            ratios = [int(r[col["r_hat"]]) / float(r_star) for r in rows
                      if r[col["r_hat"]] != ""]
            rtildes = [float(r[col["r_tilde"]]) for r in rows
                       if r[col["r_tilde"]] != ""]
            t1 = [float(r[col["runtime_ms_stage1"]]) for r in rows
                  if r[col["runtime_ms_stage1"]] != ""]
            t2 = [float(r[col["runtime_ms_stage2"]]) for r in rows
                  if r[col["runtime_ms_stage2"]] != ""]
            tt = [float(r[col["runtime_ms_total"]]) for r in rows
                  if r[col["runtime_ms_total"]] != ""]
            em, es = _mean_std(errs)
            rm, rs = _mean_std(ratios)
            rtm, _ = _mean_std(rtildes)
            t1m, _ = _mean_std(t1)
            t2m, _ = _mean_std(t2)
            ttm, _ = _mean_std(tt)
            w.writerow([
                preset, method, d, n, r_star, epsilon, sigma2, len(rows),
                sum(1 for r in rows if r[col["subspace_error"]] == ""),
                _fmt(em), _fmt(es), _fmt(rm), _fmt(rs), _fmt(rtm),
                _fmt(t1m), _fmt(t2m), _fmt(ttm),
            ])
    return out
