"""Command-line front end.

Subcommands: ``generate`` (dataset container), ``run`` (single estimate,
JSON on stdout), ``sweep`` (experiment grid to CSV), ``report`` (CSV to
summary CSV).  Exit codes: 0 success, 2 configuration error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import datagen, harness
from .core import subspace_distance
from .datagen import AdversaryStrategy, NoiseModel, make_dataset, random_clean_model
from .errors import ConfigError, RsrError
from .pipeline import RansacPlusConfig, ransac_plus
from .rngutil import mix64


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rsr",
        description="Robust subspace recovery: two-stage estimator, generators, sweeps.",
        epilog=(
            "Config files are line-based key=value with [experiment], [stage1], "
            "[stage2], [baseline] sections; every key defaults to the preset's "
            "value. Numeric defaults: stage1 C=2.2, t0=0.25, rank_tol=1e-8, "
            "initial_B=2; stage2 C_prime=4.0, delta=0.05, T_cap=20000; baseline "
            "consensus_fraction=0.5, max_iters=50000. Corruption fractions are "
            "accepted in [0, 0.5] only."
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded dataset container + sidecar")
    g.add_argument("--out", required=True, help="container path (.rsrk)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--d", type=int, default=100)
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--r-star", type=int, default=10)
    g.add_argument("--epsilon", type=float, default=0.2)
    g.add_argument("--sigma2", type=float, default=0.0)
    g.add_argument("--adversary", default="orthogonal_lowrank",
                   choices=["orthogonal_lowrank", "inlier_mimic", "point_mass", "none"])
    g.add_argument("--adv-rank", type=int, default=2)
    g.add_argument("--adv-scale", type=float, default=10.0)

    r = sub.add_parser("run", help="single estimate; RecoveryResult as JSON on stdout")
    r.add_argument("--data", help="dataset container from `rsr generate`")
    r.add_argument("--config", help="config file for algorithm settings")
    r.add_argument("--preset", default="custom", choices=harness.PRESETS)
    r.add_argument("--seed", type=int, default=None,
                   help="dataset seed when generating on the fly")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--spectra-out", default=None,
                   help="dump the stored batch spectra to this CSV")

    s = sub.add_parser("sweep", help="run an experiment grid and write records CSV")
    s.add_argument("--config", help="config file (overrides the preset)")
    s.add_argument("--preset", default=None, choices=harness.PRESETS)
    s.add_argument("--out", help="records CSV path")
    s.add_argument("--seed", type=int, default=None, help="master seed override")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--timing", choices=["wall", "none"], default=None)

    rep = sub.add_parser("report", help="aggregate a sweep CSV into a summary CSV")
    rep.add_argument("--csv", required=True)
    rep.add_argument("--out", default=None)
    return p


def _cmd_generate(args) -> int:
    model = random_clean_model(args.d, args.r_star, np.ones(args.r_star), args.seed)
    noise = NoiseModel.isotropic(args.sigma2, args.d) if args.sigma2 > 0 else NoiseModel.zero()
    strategy = AdversaryStrategy(kind=args.adversary, rank=args.adv_rank,
                                 scale=args.adv_scale)
    ds = make_dataset(model, noise, strategy, args.epsilon, args.n, args.seed)
    datagen.save_dataset(ds, args.out)
    print(f"wrote {args.out} ({ds.d}x{ds.n}, {ds.outlier_count} outliers) + sidecar")
    return 0


def _cmd_run(args) -> int:
    spec = harness.parse_config(args.config) if args.config else harness.preset_spec(args.preset)
    if args.data:
        ds = datagen.load_dataset(args.data)
        noise, epsilon = ds.noise_model, ds.epsilon
    else:
        cell = spec.grid.cells()[0]
        r_star, epsilon, sigma2 = cell
        seed = args.seed if args.seed is not None else mix64(spec.master_seed, 0, 0)
        model = random_clean_model(spec.grid.d, r_star, np.ones(r_star), seed)
        noise = (NoiseModel.isotropic(sigma2, spec.grid.d) if sigma2 > 0
                 else NoiseModel.zero())
        ds = make_dataset(model, noise, spec.adversary, epsilon, spec.grid.n, seed)
    cfg = RansacPlusConfig(spec.stage1, spec.stage2, spec.center)
    res = ransac_plus(ds.X, noise, epsilon, cfg, ds.seed)
    if args.spectra_out:
        from .stage2 import dump_spectrum_csv

        dump_spectrum_csv(res.stage2_trace, args.spectra_out)
    out = {
        "r_hat": res.r_hat,
        "r_tilde": res.r_tilde,
        "gap_found": res.stage2_trace.gap_found,
        "capped": res.stage2_trace.capped,
        "T_used": res.stage2_trace.T_used,
        "B_used": res.stage2_trace.B_used,
        "eta_thresh": res.stage1_trace.eta_thresh,
        "medres_trace": [[b, m] for b, m in res.stage1_trace.medres_trace],
        "gamma_hat": res.stage2_trace.gamma_hat.tolist(),
        "subspace_error_vs_planted": subspace_distance(
            res.basis, ds.clean_model.U_star
        ),
        "wall_times_ms": {
            "stage1": res.wall_times.stage1_ms,
            "projection": res.wall_times.projection_ms,
            "stage2": res.wall_times.stage2_ms,
            "total": res.wall_times.total_ms,
        },
    }
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cmd_sweep(args) -> int:
    if args.config:
        spec = harness.parse_config(args.config)
        if args.preset is not None:
            raise ConfigError("give either --config or --preset, not both")
    else:
        spec = harness.preset_spec(args.preset or "custom")
    if args.seed is not None:
        spec = replace(spec, master_seed=args.seed)
    if args.threads is not None:
        spec = replace(spec, threads=args.threads)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    if args.timing is not None:
        spec = replace(spec, timing=args.timing)
    out = args.out or spec.output_path
    if out is None:
        raise ConfigError("no output path: pass --out or set out in [experiment]")
    records = harness.run_experiment(spec, out)
    print(f"wrote {len(records)} records to {out}")
    return 0


def _cmd_report(args) -> int:
    out = harness.report_summary(args.csv, args.out)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "report":
            return _cmd_report(args)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
