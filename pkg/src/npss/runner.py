"""Config-driven experiment execution and artifact persistence.

Every run writes into its output directory: ``manifest.json`` (resolved
config echo, convergence summary, census, artifact paths — enough to
reproduce the run), ``trajectory.csv``, ``final_state.fld`` (grid models),
``eigen_report.txt``, and optional ``snapshots/iter*.fld`` at a stride.
Failures still produce a manifest with the error serialized, and the
process exit status is nonzero.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .eigen import SolverOptions, eigenvalue_report
from .fieldio import read_field, write_field
from .hisd import HiSDOptions, hisd_find_index1
from .lattice import Grid, square_lattice
from .mep import (
    gradient_descent_minimize,
    locate_inflection_point,
    mep_from_saddle,
    nullspace_preservation_report,
)
from .models import LBModel, LBParams, LPModel, LPParams, ToyLandscape, TOY_GLM
from .search import NPSSOptions, Trajectory, morse_census, npss_search
from .seeds import SEED_PATTERNS, prepare_initial_state

__all__ = [
    "build_model",
    "build_initial_state",
    "npss_options_from",
    "hisd_options_from",
    "run_experiment",
    "compare_experiments",
    "load_run_model",
]


def build_model(cfg: ExperimentConfig):
    """(model, grid-or-None) for the configured model type."""
    mtype = cfg.model_type
    if mtype == "toy":
        return ToyLandscape(), None
    n = cfg.get("domain", "dimensions")
    grid = Grid(square_lattice(cfg.get("domain", "L"), n), cfg.get("domain", "N"))
    if mtype == "lb":
        return LBModel(grid, LBParams(tau=cfg.get("model", "tau"), gamma=cfg.get("model", "gamma"))), grid
    return (
        LPModel(grid, LPParams(epsilon=cfg.get("model", "epsilon"), alpha=cfg.get("model", "alpha"))),
        grid,
    )


def npss_options_from(cfg: ExperimentConfig, max_iters: Optional[int] = None) -> NPSSOptions:
    sec = cfg.values["npss"]
    opts = NPSSOptions(
        beta=sec["beta"],
        zeta=sec["zeta"],
        xi=sec["xi"],
        eps_lambda=sec["eps_lambda"],
        eps_T=sec["eps_T"],
        eps0=sec["eps0"],
        max_iter_stage1=sec["max_iter_stage1"],
        max_iter_stage2=sec["max_iter_stage2"],
        v_flow_steps=sec["v_flow_steps"],
        nullspace_probe=sec["nullspace_probe"],
        eig_tol=sec["eig_tol"],
        record_stride=sec["record_stride"],
        seed=cfg.get("experiment", "seed"),
    )
    if max_iters is not None:
        opts.max_iter_stage1 = max_iters
        opts.max_iter_stage2 = max_iters
    return opts


def hisd_options_from(cfg: ExperimentConfig, max_iters: Optional[int] = None) -> HiSDOptions:
    sec = cfg.values["hisd"]
    opts = HiSDOptions(
        k=max(sec["k"], 1),
        beta=sec["beta"],
        zeta=sec["zeta"],
        xi=sec["xi"],
        eps_T=sec["eps_T"],
        eps0=sec["eps0"],
        max_iterations=sec["max_iterations"],
        v_flow_steps=sec["v_flow_steps"],
        eig_tol=sec["eig_tol"],
        record_stride=sec["record_stride"],
        seed=cfg.get("experiment", "seed"),
    )
    if max_iters is not None:
        opts.max_iterations = max_iters
    return opts


def build_initial_state(cfg: ExperimentConfig, model, grid: Optional[Grid]):
    """Named-pattern ansatz (relaxed per config) or a snapshot file."""
    if cfg.model_type == "toy":
        return np.asarray(TOY_GLM, dtype=float)
    pattern = cfg.get("initial", "pattern")
    if pattern not in SEED_PATTERNS:
        snap_grid, values = read_field(pattern)
        if snap_grid.N != grid.N or snap_grid.n != grid.n:
            raise ValueError(
                f"snapshot {pattern!r} has grid N={snap_grid.N}, n={snap_grid.n};"
                f" config expects N={grid.N}, n={grid.n}"
            )
        return values
    rng = np.random.default_rng(cfg.get("experiment", "seed"))
    return prepare_initial_state(
        pattern,
        grid,
        model,
        amplitude=cfg.get("initial", "amplitude"),
        relax=cfg.get("initial", "relax"),
        relax_tol=cfg.get("initial", "relax_tol"),
        relax_beta=cfg.get("initial", "relax_beta"),
        eps0=cfg.values["npss"]["eps0"],
        rng=rng,
        perturb_scale=cfg.get("initial", "perturb_scale"),
    )


def _snapshot_observer(outdir: str, grid: Optional[Grid], stride: int):
    if grid is None or stride <= 0:
        return None
    snapdir = os.path.join(outdir, "snapshots")
    os.makedirs(snapdir, exist_ok=True)

    def observer(iteration, stage, u):
        if iteration % stride == 0:
            write_field(os.path.join(snapdir, f"iter{iteration:08d}.fld"), grid, u)

    return observer


def _census_dict(census) -> dict:
    return {
        "negatives": census.negatives,
        "zeros": census.zeros,
        "positives": census.positives,
        "eigenvalues": [float(v) for v in census.eigenvalues],
    }


@dataclass
class RunResult:
    manifest: dict
    exit_code: int
    final_state: Optional[np.ndarray] = None
    trajectory: Optional[Trajectory] = None


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[str] = None) -> RunResult:
    """Execute the configured method and persist all artifacts."""
    outdir = output_dir or cfg.get("experiment", "output_dir")
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "config": cfg.as_dict(),
        "method": cfg.method,
        "status": "error",
        "error": None,
        "result": {},
        "artifacts": {},
    }
    trajectory = None
    final = None
    try:
        model, grid = build_model(cfg)
        u0 = build_initial_state(cfg, model, grid)
        observer = _snapshot_observer(outdir, grid, cfg.get("experiment", "snapshot_stride"))
        method = cfg.method
        if method == "npss":
            final, trajectory, result = _run_npss(cfg, model, u0, observer)
        elif method == "hisd":
            final, trajectory, result = _run_hisd(cfg, model, u0)
        elif method == "gd":
            final, trajectory, result = _run_gd(cfg, model, u0)
        else:
            final, trajectory, result = _run_mep(cfg, model, grid, u0, outdir)
        manifest["result"] = result
        manifest["status"] = "ok"
    except Exception as exc:  # serialize any module error into the manifest
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        _write_manifest(outdir, manifest)
        return RunResult(manifest=manifest, exit_code=1)

    if trajectory is not None:
        path = os.path.join(outdir, "trajectory.csv")
        trajectory.write_csv(path)
        manifest["artifacts"]["trajectory"] = path
    if final is not None and grid is not None:
        path = os.path.join(outdir, "final_state.fld")
        write_field(path, grid, final)
        manifest["artifacts"]["final_state"] = path
    if "census" in manifest["result"]:
        path = os.path.join(outdir, "eigen_report.txt")
        with open(path, "w") as fh:
            fh.write(eigenvalue_report(manifest["result"]["census"]["eigenvalues"]))
        manifest["artifacts"]["eigen_report"] = path
    _write_manifest(outdir, manifest)
    return RunResult(manifest=manifest, exit_code=0, final_state=final, trajectory=trajectory)


def _run_npss(cfg, model, u0, observer):
    opts = npss_options_from(cfg)
    res = npss_search(u0, model, opts, observer=observer)
    result = {
        "energy": float(model.energy(res.saddle)),
        "grad_norm": float(model.norm(model.gradient(res.saddle))),
        "census": _census_dict(res.census),
        "stage1_iterations": res.stage1_iterations,
        "stage2_iterations": res.stage2_iterations,
        "stage1_applies": res.stage1_applies,
        "stage2_applies": res.stage2_applies,
        "refreshes": res.trajectory.refresh_count(),
        "hessian_applies": res.trajectory.hessian_applies,
        "initial_energy": float(model.energy(u0)),
    }
    if model.dim == 2:
        result["state"] = [float(x) for x in res.saddle]
    return res.saddle, res.trajectory, result


def _run_hisd(cfg, model, u0):
    opts = hisd_options_from(cfg)
    k = cfg.values["hisd"]["k"]
    if k <= 0:
        census0 = morse_census(u0, model, eps0=opts.eps0, opts=opts.solver_options())
        k = census0.zeros + 1
    res = hisd_find_index1(u0, model, opts, k=k)
    result = {
        "energy": float(model.energy(res.state)),
        "grad_norm": float(model.norm(model.gradient(res.state))),
        "census": _census_dict(res.census),
        "ascent_dimension": k,
        "legs": [
            {
                "k": leg.k,
                "index": leg.census.index,
                "iterations": leg.iterations,
                "hessian_applies": leg.hessian_applies,
            }
            for leg in res.legs
        ],
        "hessian_applies": res.trajectory.hessian_applies,
        "initial_energy": float(model.energy(u0)),
    }
    if model.dim == 2:
        result["state"] = [float(x) for x in res.state]
    return res.state, res.trajectory, result


def _run_gd(cfg, model, u0):
    sec = cfg.values["gd"]
    final = gradient_descent_minimize(
        u0,
        model,
        tol=sec["tol"],
        beta=sec["beta"],
        max_iterations=sec["max_iterations"],
        verify=False,
    )
    census = morse_census(final, model, eps0=cfg.values["npss"]["eps0"])
    result = {
        "energy": float(model.energy(final)),
        "grad_norm": float(model.norm(model.gradient(final))),
        "census": _census_dict(census),
    }
    if model.dim == 2:
        result["state"] = [float(x) for x in final]
    return final, None, result


def _run_mep(cfg, model, grid, u0, outdir):
    sec = cfg.values["mep"]
    saddle_path = sec["saddle"]
    trajectory = None
    if saddle_path:
        _, saddle = read_field(saddle_path)
    else:
        res = npss_search(u0, model, npss_options_from(cfg))
        saddle = res.saddle
        trajectory = res.trajectory
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
    report_path = os.path.join(outdir, "mep_report.csv")
    report.write_csv(report_path)
    ip = locate_inflection_point(path, eps0=cfg.values["npss"]["eps0"])
    result = {
        "energy": float(path.energies[path.saddle_index]),
        "barrier": path.barrier(),
        "minimum_energy": float(path.energies[0]),
        "other_minimum_energy": path.other_energy,
        "path_states": len(path),
        "inflection_index": ip,
        "preserved_until": report.preserved_until,
        "nullspace_dim": path.nullspace_dim,
        "census": _census_dict(
            morse_census(path.saddle, model, eps0=cfg.values["npss"]["eps0"])
        ),
        "mep_report": report_path,
    }
    return path.saddle, trajectory, result


def _write_manifest(outdir: str, manifest: dict):
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_run_model(run_dir: str):
    """Rebuild (cfg, model, grid) from a run directory's manifest."""
    from .config import parse_config  # local import to avoid cycle confusion

    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    cfg_dict = manifest["config"]
    lines = []
    for section, kv in cfg_dict.items():
        lines.append(f"[{section}]")
        for key, value in kv.items():
            if value is None:
                continue
            lines.append(f"{key} = {value}")
    cfg = parse_config("\n".join(lines), source=os.path.join(run_dir, "manifest.json"))
    model, grid = build_model(cfg)
    return cfg, model, grid


def compare_experiments(
    cfg_npss: ExperimentConfig,
    cfg_hisd: ExperimentConfig,
    output_dir: str,
) -> dict:
    """Run both methods and emit the comparison CSV.

    Rows: (method, stage, iterations, hessian_applies); NPSS contributes
    its two stages, the baseline one row per leg.
    """
    os.makedirs(output_dir, exist_ok=True)
    npss_res = run_experiment(cfg_npss, output_dir=os.path.join(output_dir, "npss"))
    hisd_res = run_experiment(cfg_hisd, output_dir=os.path.join(output_dir, "hisd"))
    rows = []
    if npss_res.exit_code == 0:
        r = npss_res.manifest["result"]
        rows.append(("npss", 1, r["stage1_iterations"], r["stage1_applies"]))
        rows.append(("npss", 2, r["stage2_iterations"], r["stage2_applies"]))
    if hisd_res.exit_code == 0:
        for i, leg in enumerate(hisd_res.manifest["result"]["legs"], start=1):
            rows.append(("hisd", i, leg["iterations"], leg["hessian_applies"]))
    path = os.path.join(output_dir, "comparison.csv")
    with open(path, "w", newline="") as fh:
        fh.write("method,stage,iterations,hessian_applies\n")
        for method, stage, iters, applies in rows:
            fh.write(f"{method},{stage},{iters},{applies}\n")
    status = 0 if npss_res.exit_code == 0 and hisd_res.exit_code == 0 else 1
    return {
        "comparison": path,
        "exit_code": status,
        "npss": npss_res.manifest,
        "hisd": hisd_res.manifest,
    }
