"""Experiment runner CLI.

Verbs: ``sweep`` (crossing-fraction grids), ``bisect`` (critical-activity
search), ``check-bounds`` (condition (P), stability and contour bounds),
``render`` (SVG scenes) and ``report`` (markdown summary). Exit codes:
0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import contour, percolation, render, storage
from .config import ConfigError, ExperimentConfig, RunManifest, parse_config
from .geometry import Configuration, Window
from .models import (
    UnsupportedModelError,
    check_condition_p,
    compute_beta_minus,
    compute_beta_plus,
    derive_condition_p,
    local_stability_constant,
)
from .sampler import sample_poisson

SWEEP_FIELDS = ["seed", "L", "beta", "n_reps", "fraction", "ci_halfwidth"]
BISECT_FIELDS = ["seed", "L", "beta_hat", "bracket_lo", "bracket_hi", "n_reps", "tol"]


def _sweep_cell(payload: dict) -> dict:
    """One (L, beta) cell; module-level so process pools can pickle it."""
    cfg = ExperimentConfig(**payload["cfg"])
    model = cfg.build_model(beta=payload["beta"])
    frac, ci = percolation.perc_probability(
        model,
        R=payload["R"],
        L=payload["L"],
        n_reps=payload["n_reps"],
        sampler=payload["sampler"],
        seed=payload["seed"],
        d=payload["d"],
        axis=payload["axis"],
        mcmc_steps=payload["mcmc_steps"],
    )
    return {
        "seed": payload["seed"],
        "L": payload["L"],
        "beta": payload["beta"],
        "n_reps": payload["n_reps"],
        "fraction": frac,
        "ci_halfwidth": ci,
    }


def _percolation_settings(cfg: ExperimentConfig):
    R = cfg.get("percolation", "R", float, required=True)
    d = cfg.get("percolation", "d", int, default=2)
    axis = cfg.get("percolation", "axis", int, default=0)
    sampler = cfg.get("percolation", "sampler", str, default=None)
    if sampler is None:
        sampler = "exact" if cfg.model_kind == "poisson" else "cftp"
    if sampler not in ("exact", "mcmc", "cftp"):
        raise ConfigError("percolation", "sampler", f"unknown sampler {sampler!r}")
    mcmc_steps = cfg.get("percolation", "mcmc_steps", int, default=None)
    return R, d, axis, sampler, mcmc_steps


def cmd_sweep(cfg: ExperimentConfig, seed: int, jobs: int, out: Path) -> int:
    R, d, axis, sampler, mcmc_steps = _percolation_settings(cfg)
    betas = cfg.float_list("sweep", "betas", required=True)
    L_list = cfg.float_list("sweep", "L", required=True)
    n_reps = cfg.get("sweep", "n_reps", int, default=100)
    if n_reps < 1:
        raise ConfigError("sweep", "n_reps", "must be >= 1")

    cells = [(L, beta) for L in L_list for beta in betas]
    manifest = RunManifest.create(cfg, "sweep", seed, len(cells))
    manifest.write(out / "manifest.json")
    payloads = [
        {
            "cfg": {
                "text": cfg.text,
                "model_kind": cfg.model_kind,
                "model_params": cfg.model_params,
                "sections": cfg.sections,
            },
            "beta": beta,
            "R": R,
            "L": L,
            "n_reps": n_reps,
            "sampler": sampler,
            "seed": manifest.task_seeds[i],
            "d": d,
            "axis": axis,
            "mcmc_steps": mcmc_steps,
        }
        for i, (L, beta) in enumerate(cells)
    ]
    rows = []
    with storage.RowWriter(out / "sweep.csv", SWEEP_FIELDS) as writer:
        if jobs <= 1:
            for payload in payloads:
                row = _sweep_cell(payload)
                writer.write(row)
                rows.append(row)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_sweep_cell, p) for p in payloads]
                for fut in futures:  # submission order keeps output deterministic
                    row = fut.result()
                    writer.write(row)
                    rows.append(row)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    print(f"sweep: wrote {len(cells)} cells to {out / 'sweep.csv'}")
    return 0


def cmd_bisect(cfg: ExperimentConfig, seed: int, jobs: int, out: Path) -> int:
    R, d, axis, sampler, _ = _percolation_settings(cfg)
    L_list = cfg.float_list("bisect", "L", required=True)
    tol = cfg.get("bisect", "tol", float, default=0.1)
    n_reps = cfg.get("bisect", "n_reps", int, default=200)
    lo = cfg.get("bisect", "beta_lo", float, default=None)
    hi = cfg.get("bisect", "beta_hi", float, default=None)
    bracket = (lo, hi) if lo is not None and hi is not None else None

    manifest = RunManifest.create(cfg, "bisect", seed, len(L_list))
    manifest.write(out / "manifest.json")
    result = percolation.estimate_beta_c(
        lambda beta: cfg.build_model(beta=beta),
        R,
        L_list,
        tol=tol,
        seed=seed,
        n_reps=n_reps,
        sampler=sampler,
        d=d,
        axis=axis,
        beta_bracket=bracket,
    )
    with storage.RowWriter(out / "bisect.csv", BISECT_FIELDS) as writer:
        for L in sorted(result.per_L):
            entry = result.per_L[L]
            writer.write(
                {
                    "seed": seed,
                    "L": L,
                    "beta_hat": entry["beta_hat"],
                    "bracket_lo": entry["bracket"][0],
                    "bracket_hi": entry["bracket"][1],
                    "n_reps": n_reps,
                    "tol": tol,
                }
            )
    print(f"bisect: beta_hat({sorted(result.per_L)}) -> {result.estimate:.6g}")
    return 0


def cmd_check_bounds(cfg: ExperimentConfig, seed: int, jobs: int, out: Path) -> int:
    R = cfg.get("percolation", "R", float, default=None)
    d = cfg.get("percolation", "d", int, default=2)
    model = cfg.build_model()
    report: dict = {"model": model.params()}

    try:
        cond = derive_condition_p(model, d=d)
        report["condition_p"] = {"r": cond.r, "delta": cond.delta}
    except UnsupportedModelError as exc:
        cond = None
        report["condition_p"] = {"unsupported": str(exc)}

    r_test = cfg.get("bounds", "r", float, default=cond.r if cond and cond.r > 0 else 0.2)
    delta_test = cfg.get("bounds", "delta", float, default=cond.delta if cond else 1.0)
    trials = cfg.get("bounds", "trials", int, default=200)
    check = check_condition_p(model, r_test, delta_test, trials, seed, d=d)
    report["condition_p_check"] = {
        "r": r_test,
        "delta": delta_test,
        "passed": check.passed,
        "min_lambda_tilde": check.min_lambda_tilde,
        "trials": check.trials_used,
    }

    cstar = local_stability_constant(model, d=d)
    report["local_stability"] = cstar if cstar is not None else "not locally stable"

    if cond and R is not None and R > r_test:
        m = cfg.get("bounds", "m", int, default=contour.choose_m(d, r_test, R))
        bp = compute_beta_plus(d, m, r_test, cond.delta)
        report["beta_plus"] = {
            "m": m,
            "c": bp.c,
            "log2_beta_plus": bp.log2_beta_plus,
            "astronomical": bp.astronomical,
        }
        cube_count = cfg.get("bounds", "cube_count", int, default=6)
        rng = np.random.default_rng(seed)
        cubes = {tuple(int(v) for v in rng.integers(-4, 5, size=d)) for _ in range(cube_count)}
        lemma = contour.check_key_lemma(
            model, sorted(cubes), r_test, n_reps=cfg.get("bounds", "n_reps", int, default=400),
            seed=seed, m=m,
        )
        report["key_lemma"] = {
            "empirical": lemma.empirical,
            "empirical_se": lemma.empirical_se,
            "bound": lemma.bound,
            "bound_applicable": lemma.bound_applicable,
            "analytic": lemma.analytic,
        }
    poisson_critical = cfg.get("bounds", "poisson_critical", float, default=None)
    if poisson_critical is not None and cstar is not None:
        report["beta_minus"] = compute_beta_minus(model, poisson_critical, d=d)

    k_max = cfg.get("bounds", "k_max", int, default=8)
    loops = {}
    for k in range(3, k_max + 1):
        enum = contour.enumerate_loops(cfg.get("bounds", "m", int, default=15), k, collect=False)
        loops[k] = {"count": enum.count, "bound": enum.bound, "ok": enum.count <= enum.bound}
    report["loops"] = loops

    out.mkdir(parents=True, exist_ok=True)
    (out / "bounds.json").write_text(json.dumps(report, indent=2, default=str), encoding="utf-8")
    print(f"check-bounds: report at {out / 'bounds.json'}")
    for key in ("condition_p", "local_stability", "beta_plus", "beta_minus"):
        if key in report:
            print(f"  {key}: {report[key]}")
    return 0


def cmd_render(cfg: ExperimentConfig, seed: int, jobs: int, out: Path) -> int:
    R = cfg.get("percolation", "R", float, required=True)
    d = cfg.get("percolation", "d", int, default=2)
    if d != 2:
        raise ConfigError("percolation", "d", "render draws d = 2; use the slice diagnostic")
    L = cfg.get("render", "L", float, default=1.0)
    window = Window.cube(L, 2)
    points_csv = cfg.get("render", "points_csv", str, default=None)
    if points_csv:
        config = storage.load_configuration(points_csv)
    else:
        model = cfg.build_model()
        if cfg.model_kind == "poisson":
            config = sample_poisson(model.beta, window, seed)
        else:
            from .sampler import cftp_sample

            run = cftp_sample(model, window, seed=seed)
            if not run.coalesced:
                raise RuntimeError("cftp did not coalesce for the render sample")
            config = run.retained

    r = cfg.get("render", "r", float, default=None)
    m = cfg.get("render", "m", int, default=None)
    lattice = contour.CubeLattice(m, 2) if m else None
    chain = None
    chain_spec = cfg.get("render", "chain", str, default=None)
    if chain_spec:
        vals = [float(v) for v in chain_spec.replace(",", " ").split()]
        if len(vals) != 4 or lattice is None or r is None:
            raise ConfigError("render", "chain", "needs x1 y1 x2 y2 plus m and r")
        bm = percolation.BooleanModel(config, R)
        chain = contour.separating_chain(bm, lattice, vals[:2], vals[2:], r)
        (out / "chain.json").write_text(
            json.dumps({"m": m, "r": r, "chain": chain}, indent=2), encoding="utf-8"
        )
    svg = render.render_scene(config, R, r=r, lattice=lattice, chain=chain)
    path = render.save_svg(out / "scene.svg", svg)
    print(f"render: {path}")
    return 0


def cmd_report(results_dir: Path, out: Path) -> int:
    results_dir = Path(results_dir)
    if not results_dir.is_dir():
        raise FileNotFoundError(f"results directory {results_dir} does not exist")
    lines = ["# Experiment report", ""]
    valid = 0
    manifests = sorted(results_dir.rglob("manifest.json"))
    if manifests:
        lines.append("## Manifests")
        for mpath in manifests:
            try:
                man = RunManifest.read(mpath)
            except Exception as exc:  # corrupted manifest: warn and skip
                print(f"warning: skipping {mpath}: {exc}", file=sys.stderr)
                continue
            lines.append(
                f"- `{mpath.parent.name}` command={man.command} seed={man.master_seed} "
                f"config_sha256={man.config_sha256[:12]}..."
            )
        lines.append("")
    for csv_path in sorted(results_dir.rglob("*.csv")):
        try:
            rows = storage.read_result_csv(csv_path)
        except Exception as exc:
            print(f"warning: skipping corrupted CSV {csv_path}: {exc}", file=sys.stderr)
            continue
        if not rows:
            print(f"warning: skipping empty CSV {csv_path}", file=sys.stderr)
            continue
        valid += 1
        lines.append(f"## {csv_path.relative_to(results_dir)}")
        lines.append("")
        header = list(rows[0].keys())
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for row in rows:
            lines.append("| " + " | ".join(str(row[h]) for h in header) + " |")
        lines.append("")
    for bounds_path in sorted(results_dir.rglob("bounds.json")):
        try:
            data = json.loads(bounds_path.read_text(encoding="utf-8"))
        except Exception as exc:
            print(f"warning: skipping {bounds_path}: {exc}", file=sys.stderr)
            continue
        valid += 1
        lines.append(f"## {bounds_path.relative_to(results_dir)}")
        lines.append("")
        lines.append("```json")
        lines.append(json.dumps(data, indent=2, default=str))
        lines.append("```")
        lines.append("")
    if valid == 0:
        raise RuntimeError(f"no valid result files under {results_dir}")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.md"
    path.write_text("\n".join(lines), encoding="utf-8")
    print(f"report: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsperc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sweep", "bisect", "check-bounds", "render"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--out", type=Path, default=None)
    p = sub.add_parser("report")
    p.add_argument("results_dir", type=Path)
    p.add_argument("--out", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            out = args.out if args.out is not None else args.results_dir
            return cmd_report(args.results_dir, out)
        cfg = parse_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("run", "seed", int, default=0)
        jobs = args.jobs if args.jobs is not None else cfg.get(
            "run", "jobs", int, default=os.cpu_count() or 1
        )
        out = args.out if args.out is not None else Path(
            cfg.get("run", "out", str, default="results")
        )
        out.mkdir(parents=True, exist_ok=True)
        handler = {
            "sweep": cmd_sweep,
            "bisect": cmd_bisect,
            "check-bounds": cmd_check_bounds,
            "render": cmd_render,
        }[args.command]
        return handler(cfg, seed, jobs, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
