"""``tandem-tlc <recipe> --spec FILE [--seed N] [--out DIR] [--workers K]``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import compare_ipa_fd, grid_search
from .config import RECIPES, ExperimentSpec, SpecError, load_data, resolve
from .ipa import run_ipa, write_gradient_csv
from .optimizer import estimate_J, optimize
from .sim import queue_areas, seed_bank, simulate


def _fmt(v) -> str:
    return f"{v:.9f}"


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _recipe_simulate(spec: ExperimentSpec, out, workers):
    res = simulate(spec.sim)
    areas = queue_areas(res.trace) / spec.sim.horizon
    th = spec.sim.theta.as_array()
    main = out("simulate")
    _write_rows(main, ["seed", "theta1", "theta2", "theta3", "theta4", "L",
                       "Q1", "Q2", "Q3", "Q4", "n_events"],
                [[spec.sim.seed] + [_fmt(v) for v in th] + [_fmt(res.L)]
                 + [_fmt(v) for v in areas] + [len(res.trace)]])
    trace_path = out("simulate_trace")
    res.trace.to_csv(trace_path)
    return [main, trace_path], {"L": res.L}


def _recipe_gradient(spec: ExperimentSpec, out, workers):
    paths = spec.section("gradient")["paths"]
    seeds = [spec.seed] if paths == 1 else seed_bank(spec.seed, paths)
    rows = []
    for s in seeds:
        cfg = spec.sim.with_seed(int(s))
        res = simulate(cfg)
        ipa = run_ipa(res.trace, cfg.weights, spec.rates)
        rows.append((cfg.theta.as_array(), res.L, ipa.dL, ipa.n_events, ipa.n_degenerate))
    path = out("gradient")
    write_gradient_csv(path, rows)
    mean = np.mean([r[2] for r in rows], axis=0)
    return [path], {"mean_gradient": mean.tolist()}


def _optimize_point(raw: dict) -> dict:
    spec = resolve(raw)
    traj = optimize(spec.sim, spec.optimizer)
    theta = traj.theta_final
    reps = spec.section("optimizer")["eval_reps"]
    J, err = estimate_J(spec.sim, theta, reps)
    traj.J[-1] = J
    return {"traj": traj, "theta": theta, "J": J, "err": err, "reps": reps,
            "iterations": len(traj.k) - 1, "stop_reason": traj.stop_reason}


def _recipe_optimize(spec: ExperimentSpec, out, workers):
    res = _optimize_point(spec.raw)
    path = out("optimize")
    res["traj"].to_csv(path)
    return [path], {"theta_star": res["theta"].tolist(), "J_star": res["J"],
                    "J_stderr": res["err"], "stop_reason": res["stop_reason"],
                    "iterations": res["iterations"]}


def _recipe_brute_force(spec: ExperimentSpec, out, workers):
    sim = spec.sim
    if spec.grid.coupling is not None:
        T1, T2 = spec.grid.coupling
        sim = sim.with_theta((T1 / 2, T1 / 2, T2 / 2, T2 / 2))
    result = grid_search(sim, spec.grid)
    path = out("brute-force")
    result.to_csv(path)
    return [path], {"theta_best": result.theta_best.tolist(), "J_best": result.J_best}


def _recipe_fd_check(spec: ExperimentSpec, out, workers):
    fd = spec.section("fd")
    seeds = seed_bank(spec.seed, fd["paths"])
    rows = []
    n_reordered = 0
    worst = 0.0
    for s in seeds:
        cmp = compare_ipa_fd(spec.sim.with_seed(int(s)), fd["delta"], spec.rates)
        n_reordered += cmp.any_reordered
        if not cmp.any_reordered:
            worst = max(worst, float(cmp.rel_err.max()))
        rows.append([int(s)] + [_fmt(v) for v in spec.sim.theta.as_array()] + [_fmt(cmp.L)]
                    + [_fmt(v) for v in cmp.ipa] + [_fmt(v) for v in cmp.fd]
                    + [_fmt(v) for v in cmp.rel_err] + [int(v) for v in cmp.reordered])
    header = (["seed", "theta1", "theta2", "theta3", "theta4", "L"]
              + [f"ipa{i}" for i in range(1, 5)] + [f"fd{i}" for i in range(1, 5)]
              + [f"rel_err{i}" for i in range(1, 5)] + [f"reordered{i}" for i in range(1, 5)])
    path = out("fd-check")
    _write_rows(path, header, rows)
    return [path], {"paths": len(seeds), "reordered": n_reordered,
                    "max_rel_err_unreordered": worst}


def _sweep(spec: ExperimentSpec, points, workers):
    """Run one coupled optimization per (label, raw spec) point, in order."""
    raws = [raw for _, raw in points]
    if workers > 1 and len(raws) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_optimize_point, raws))
    return [_optimize_point(raw) for raw in raws]


def _coupled_raw(raw: dict, T1: float, T2: float, arrival_rates=None) -> dict:
    new = json.loads(json.dumps(raw))
    new["optimizer"]["coupling"] = [T1, T2]
    new["optimizer"]["theta0"] = [T1 / 2, T1 / 2, T2 / 2, T2 / 2]
    new["sim"]["theta"] = [T1 / 2, T1 / 2, T2 / 2, T2 / 2]
    if arrival_rates is not None:
        new["sim"]["arrival_rates"] = list(arrival_rates)
    return new


def _sweep_rows(results, lead):
    rows = []
    for head, r in zip(lead, results):
        rows.append(head + [_fmt(v) for v in r["theta"]] + [_fmt(r["J"]), _fmt(r["err"]),
                                                             r["reps"], r["iterations"]])
    return rows


def _recipe_sweep_T2(spec: ExperimentSpec, out, workers):
    sw = spec.section("sweep")
    T1 = float(sw["T1"])
    points = [(T2, _coupled_raw(spec.raw, T1, float(T2))) for T2 in sw["T2_values"]]
    results = _sweep(spec, points, workers)
    lead = [[_fmt(T1), _fmt(float(T2))] for T2, _ in points]
    path = out("sweep-T2")
    _write_rows(path, ["T1", "T2", "theta1", "theta2", "theta3", "theta4", "J_mean",
                       "J_stderr", "reps", "iterations"], _sweep_rows(results, lead))
    best = int(np.argmin([r["J"] for r in results]))
    return [path], {"T2_best": float(points[best][0])}


def _recipe_sweep_arrival(spec: ExperimentSpec, out, workers):
    sw = spec.section("sweep")
    T1 = float(sw["T1"])
    a = spec.sim.arrival_rates
    points = [(r, _coupled_raw(spec.raw, T1, T1, (1.0 / r, a[1], a[2]))) for r in sw["r_values"]]
    results = _sweep(spec, points, workers)
    lead = [[_fmt(float(r)), _fmt(1.0 / r)] for r, _ in points]
    path = out("sweep-arrival")
    _write_rows(path, ["r", "alpha1", "theta1", "theta2", "theta3", "theta4", "J_mean",
                       "J_stderr", "reps", "iterations"], _sweep_rows(results, lead))
    return [path], {"theta1_star": [float(r["theta"][0]) for r in results]}


RUNNERS = {
    "simulate": _recipe_simulate,
    "gradient": _recipe_gradient,
    "optimize": _recipe_optimize,
    "brute-force": _recipe_brute_force,
    "fd-check": _recipe_fd_check,
    "sweep-T2": _recipe_sweep_T2,
    "sweep-arrival": _recipe_sweep_arrival,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(spec: ExperimentSpec, out_dir, workers: int = 1, argv=None) -> int:
    """Execute a recipe, write its CSVs and ``manifest.json``; returns the exit code."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S_%f")
    written: list = []

    def out(name: str) -> Path:
        p = out_dir / f"{name}_{stamp}.csv"
        written.append(p)
        return p

    manifest = {
        "recipe": spec.recipe,
        "seed": spec.seed,
        "version": __version__,
        "command": list(argv) if argv is not None else None,
        "started": stamp,
        "resolved_spec": spec.raw,
    }
    code = 0
    try:
        _, summary = RUNNERS[spec.recipe](spec, out, workers)
        manifest["status"] = "complete"
        manifest["summary"] = summary
    except Exception as exc:        # recorded, then reported through the exit code
        manifest["status"] = "partial"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        print(f"tandem-tlc: {spec.recipe} failed: {manifest['error']}", file=sys.stderr)
        code = 1
    manifest["finished"] = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S_%f")
    manifest["outputs"] = [{"file": p.name, "sha256": _sha256(p)} for p in written if p.exists()]
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tandem-tlc",
                                description="Simulate and tune two tandem traffic lights.")
    p.add_argument("recipe", choices=RECIPES)
    p.add_argument("--spec", help="YAML/JSON experiment file or a run manifest")
    p.add_argument("--seed", type=int, help="master seed (overrides the file)")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--workers", type=int, default=1, help="processes for sweep points")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("tandem-tlc: --workers must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("tandem-tlc: --seed must be >= 0", file=sys.stderr)
        return 2
    try:
        data = load_data(args.spec) if args.spec else None
        spec = resolve(data, args.recipe, args.seed)
    except (SpecError, OSError) as exc:
        print(f"tandem-tlc: {exc}", file=sys.stderr)
        return 2
    return run(spec, args.out, args.workers, argv)


if __name__ == "__main__":
    sys.exit(main())
