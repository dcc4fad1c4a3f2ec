"""Command-line entry point.

Verbs:
  run <config>                       execute the configured experiment
  census <snapshot>                  eigenvalue census of a stored field
  mep <snapshot>                     minimum-energy path through a stored saddle
  angles <run-dir>                   nullspace angles along a run's snapshots
  compare <config-npss> <config-hisd>   both methods + comparison CSV

``census``/``mep``/``angles`` read model parameters from the manifest.json
next to the snapshot (or from --config).  The environment variable
NPSS_THREADS caps the transform worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .config import ConfigError, load_config, schema_help
from .eigen import SolverOptions, eigenvalue_report, smallest_eigenpairs
from .fieldio import read_field
from .mep import locate_inflection_point, mep_from_saddle, nullspace_preservation_report
from .nullspace import detect_nullspace, vector_subspace_angle
from .runner import build_model, compare_experiments, run_experiment
from .search import morse_census

N_ANGLE_TRACE = 6


def _load_with_config(snapshot: str, config_path: str | None):
    """Model for a snapshot: explicit --config or the run's manifest."""
    if config_path:
        cfg = load_config(config_path)
    else:
        run_dir = os.path.dirname(os.path.abspath(snapshot))
        manifest_path = os.path.join(run_dir, "manifest.json")
        if not os.path.exists(manifest_path):
            manifest_path = os.path.join(os.path.dirname(run_dir), "manifest.json")
        if not os.path.exists(manifest_path):
            raise SystemExit(
                f"no manifest.json found near {snapshot}; pass --config explicitly"
            )
        from .runner import load_run_model

        cfg, model, grid = load_run_model(os.path.dirname(manifest_path))
        return cfg, model, grid
    model, grid = build_model(cfg)
    return cfg, model, grid


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.values["experiment"]["seed"] = args.seed
    if args.snapshot_stride is not None:
        cfg.values["experiment"]["snapshot_stride"] = args.snapshot_stride
    if args.max_iters is not None:
        cfg.values["npss"]["max_iter_stage1"] = args.max_iters
        cfg.values["npss"]["max_iter_stage2"] = args.max_iters
        cfg.values["hisd"]["max_iterations"] = args.max_iters
        cfg.values["gd"]["max_iterations"] = args.max_iters
    result = run_experiment(cfg, output_dir=args.output_dir)
    status = result.manifest["status"]
    outdir = args.output_dir or cfg.get("experiment", "output_dir")
    if status == "ok":
        summary = result.manifest["result"]
        energy = summary.get("energy")
        print(f"{cfg.method} finished: energy={energy!r} artifacts in {outdir}")
    else:
        print(f"{cfg.method} failed: {result.manifest['error']}", file=sys.stderr)
    return result.exit_code


def _cmd_census(args) -> int:
    cfg, model, grid = _load_with_config(args.snapshot, args.config)
    _, values = read_field(args.snapshot)
    eps0 = cfg.values["npss"]["eps0"]
    census = morse_census(
        values, model, eps0=eps0, opts=SolverOptions(use_preconditioner=True, seed=args.seed or 0)
    )
    print(f"grad_norm = {model.norm(model.gradient(values)):.3e}")
    print(
        f"census: {census.negatives} below -{eps0:g}, {census.zeros} within, "
        f"{census.positives} above"
    )
    print(eigenvalue_report(census.eigenvalues), end="")
    return 0


def _cmd_mep(args) -> int:
    cfg, model, grid = _load_with_config(args.snapshot, args.config)
    _, saddle = read_field(args.snapshot)
    sec = cfg.values["mep"]
    path = mep_from_saddle(
        saddle,
        model,
        xi=sec["xi"],
        tol=sec["tol"],
        beta=sec["beta"],
        eps0=cfg.values["npss"]["eps0"],
        stride_fraction=sec["stride_fraction"],
    )
    report = nullspace_preservation_report(path)
    outdir = args.output_dir or "."
    os.makedirs(outdir, exist_ok=True)
    dest = os.path.join(outdir, "mep_report.csv")
    report.write_csv(dest)
    ip = locate_inflection_point(path, eps0=cfg.values["npss"]["eps0"])
    print(
        f"path: {len(path)} states, barrier = {path.barrier():.6e}, "
        f"inflection at j={ip}, angles preserved through j={report.preserved_until}"
    )
    print(f"report written to {dest}")
    return 0


def _cmd_angles(args) -> int:
    run_dir = args.run_dir
    snapdir = os.path.join(run_dir, "snapshots")
    if not os.path.isdir(snapdir):
        print(f"no snapshots directory under {run_dir}", file=sys.stderr)
        return 2
    files = sorted(
        os.path.join(snapdir, f) for f in os.listdir(snapdir) if f.endswith(".fld")
    )
    if not files:
        print(f"no snapshots in {snapdir}", file=sys.stderr)
        return 2
    from .runner import load_run_model

    cfg, model, grid = load_run_model(run_dir)
    eps0 = cfg.values["npss"]["eps0"]
    solver = SolverOptions(use_preconditioner=True, seed=args.seed or 0)

    _, first = read_field(files[0])
    anchor_eps = max(eps0, cfg.values["npss"]["eps_lambda"])
    W0 = detect_nullspace(
        model.hessian_operator(first),
        eps0=anchor_eps,
        m_probe=min(8, model.dim),
        opts=solver,
    )
    outdir = args.output_dir or run_dir
    os.makedirs(outdir, exist_ok=True)
    dest = os.path.join(outdir, "angles.csv")
    m = min(N_ANGLE_TRACE, model.dim)
    warm = None
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step"] + [f"theta{i + 1}" for i in range(N_ANGLE_TRACE)])
        for path_ in files:
            _, u = read_field(path_)
            H = model.hessian_operator(u)
            opts = solver if warm is None else SolverOptions(
                **{**solver.__dict__, "initial_guess": warm}
            )
            pairs = smallest_eigenpairs(H, m, opts)
            warm = np.stack([p.vector for p in pairs])
            step = os.path.basename(path_)[4:-4]
            row = [int(step)]
            for i in range(N_ANGLE_TRACE):
                if i < m and W0.dim > 0:
                    row.append(repr(float(vector_subspace_angle(pairs[i].vector, W0))))
                else:
                    row.append(repr(float("nan")))
            writer.writerow(row)
    print(f"angle trace over {len(files)} snapshots written to {dest}")
    return 0


def _cmd_compare(args) -> int:
    try:
        cfg_a = load_config(args.config_npss)
        cfg_b = load_config(args.config_hisd)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg_a.method != "npss" or cfg_b.method != "hisd":
        print("compare expects an npss config then a hisd config", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg_a.values["experiment"]["seed"] = args.seed
        cfg_b.values["experiment"]["seed"] = args.seed
    outdir = args.output_dir or "comparison"
    summary = compare_experiments(cfg_a, cfg_b, outdir)
    print(f"comparison written to {summary['comparison']}")
    for name in ("npss", "hisd"):
        manifest = summary[name]
        if manifest["status"] != "ok":
            print(f"{name} failed: {manifest['error']}", file=sys.stderr)
    return summary["exit_code"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npss",
        description="Nullspace-preserving saddle search for phase-field energy landscapes.",
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, output_default=None):
        p.add_argument("--output-dir", default=output_default, help="artifact directory")
        p.add_argument("--seed", type=int, default=None, help="override the RNG seed")

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    common(p_run)
    p_run.add_argument(
        "--snapshot-stride", type=int, default=None, help="field snapshot stride override"
    )
    p_run.add_argument(
        "--max-iters", type=int, default=None, help="iteration budget override for all methods"
    )
    p_run.set_defaults(func=_cmd_run)

    p_census = sub.add_parser("census", help="eigenvalue census of a snapshot")
    p_census.add_argument("snapshot")
    p_census.add_argument("--config", default=None, help="config file (default: nearby manifest)")
    common(p_census)
    p_census.set_defaults(func=_cmd_census)

    p_mep = sub.add_parser("mep", help="minimum-energy path through a stored saddle")
    p_mep.add_argument("snapshot")
    p_mep.add_argument("--config", default=None, help="config file (default: nearby manifest)")
    common(p_mep)
    p_mep.set_defaults(func=_cmd_mep)

    p_angles = sub.add_parser("angles", help="nullspace angles along a run's snapshots")
    p_angles.add_argument("run_dir")
    common(p_angles)
    p_angles.set_defaults(func=_cmd_angles)

    p_cmp = sub.add_parser("compare", help="run npss and hisd configs, emit comparison CSV")
    p_cmp.add_argument("config_npss")
    p_cmp.add_argument("config_hisd")
    common(p_cmp)
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
