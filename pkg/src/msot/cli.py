"""Command-line interface: ``msot solve | partial | barycenter | bench``.

Each run writes into one output directory.  ``summary.json`` is written
with sorted keys; everything that depends on the clock lives under its
``timing`` key so reruns can be compared byte for byte without it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .barycenter import multiscale_barycenter
from .errors import TransportError
from .grid import Grid, write_grid_file
from .lp_core import SolverOptions, write_plan
from .measure import CostSpec
from .multiscale import MultiscaleConfig, multiscale_solve
from .postprocess import (ANALYTIC_MAPS, RasterDensity, barycentric_project, error_metrics, measure_cloud,
                          pushforward, raster_for, smooth, write_map, write_pgm,
                          write_raster)
from .presets import load_density, preset_density


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _cost(text: str) -> CostSpec:
    try:
        return CostSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--cost", type=_cost, default=CostSpec(2.0), metavar="p=<real>",
                   help="power-law cost |x-y|^p (default p=2)")
    p.add_argument("--coarse", type=_positive_int, default=16,
                   help="cells along the longest side of each domain at level 0")
    p.add_argument("--levels", type=_nonneg_int, default=0, help="number of refinements")
    p.add_argument("--dilate", type=_positive_int, default=1, help="dilation radius")
    p.add_argument("--spacing", choices=["common", "domain"], default="common",
                   help="one spacing for both grids, or --coarse cells per domain")
    p.add_argument("--sigma", type=float, default=6.0,
                   help="smoothing width as a multiple of the finest spacing")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for random_field presets that do not set one")
    p.add_argument("--pricing", choices=["block", "dantzig"], default="block")
    p.add_argument("--backend", choices=["cython", "python"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"msot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="balanced transport between two densities")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--validate", choices=["none"] + sorted(ANALYTIC_MAPS), default="none")
    _common(p, "msot-solve")

    p = sub.add_parser("partial", help="partial transport over a sweep of masses")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mass", type=_floats, required=True,
                   help="comma-separated transported mass fractions")
    _common(p, "msot-partial")

    p = sub.add_parser("barycenter", help="Wasserstein barycenter of several densities")
    p.add_argument("--measures", nargs="+", required=True)
    p.add_argument("--weights", type=_floats, default=None,
                   help="comma-separated weights (default: equal)")
    _common(p, "msot-barycenter")

    p = sub.add_parser("bench", help="square to diamond timing sweep")
    p.add_argument("--sizes", type=_ints, default=[32, 64, 128],
                   help="comma-separated finest resolutions N")
    _common(p, "msot-bench")
    return parser


def _density(spec: str, seed: Optional[int]):
    if seed is not None and spec.split(":", 1)[0] == "random_field" and "seed=" not in spec:
        return preset_density(spec, seed=seed)
    return load_density(spec)


def _config(args, levels: Optional[int] = None) -> MultiscaleConfig:
    opts = SolverOptions(pricing=args.pricing, backend=args.backend)
    return MultiscaleConfig(coarse_n=args.coarse, levels=args.levels if levels is None else levels,
                            dilation_radius=args.dilate, spacing=args.spacing, options=opts)


def _config_echo(args) -> dict:
    return {"coarse": args.coarse, "levels": args.levels, "dilate": args.dilate,
            "spacing": args.spacing,
            "cost": args.cost.describe(), "sigma": args.sigma, "pricing": args.pricing}


def _peak_rss_kb() -> Optional[int]:
    try:
        import resource
    except ImportError:
        return None
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)


def _split_traces(traces) -> tuple[list, list]:
    rows, secs = [], []
    for t in traces:
        d = t.as_dict() if hasattr(t, "as_dict") else asdict(t)
        secs.append(d.pop("seconds"))
        rows.append(d)
    return rows, secs


def _write_summary(out: Path, summary: dict, timing: dict) -> None:
    summary = dict(summary, timing=timing)
    text = json.dumps(summary, sort_keys=True, indent=2, default=_jsonable)
    (out / "summary.json").write_text(text + "\n")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def cells_to_raster(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Per-cell values laid out on the grid's full bounding lattice."""
    out = np.zeros(grid.shape)
    out[tuple(grid.lattice.T)] = values
    return out


def _write_cells(out: Path, stem: str, grid: Grid, values: np.ndarray) -> None:
    lo = np.asarray(grid.lo)
    hi = lo + np.asarray(grid.shape) * grid.h
    raster = cells_to_raster(grid, values)
    write_grid_file(out / f"{stem}.grid", raster, lo, hi)
    if raster.ndim == 2:
        write_pgm(out / f"{stem}.pgm", RasterDensity(raster, lo, hi))


def _write_smoothed(out: Path, cloud, grid: Grid, sigma: float, stem: str = "density") -> float:
    shape, lo, hi = raster_for(grid)
    raster = smooth(cloud, sigma * grid.h, shape, lo, hi)
    write_raster(out / f"{stem}.grid", raster)
    if raster.values.ndim == 2:
        write_pgm(out / f"{stem}.pgm", raster)
    return raster.integral()


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    source, target = _density(args.source, args.seed), _density(args.target, args.seed)
    plan, mu, nu, traces = multiscale_solve(source, target, args.cost, _config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_plan(out / "plan.coo", plan)
    tmap = barycentric_project(plan, mu, nu.grid)
    write_map(out / "map.txt", tmap)
    _write_smoothed(out, pushforward(tmap), nu.grid, args.sigma)
    levels, secs = _split_traces(traces)
    summary = {
        "command": "solve",
        "problem": {"source": args.source, "target": args.target, "seed": args.seed},
        "config": _config_echo(args),
        "levels": levels,
        "objective": plan.objective,
        "nnz": plan.nnz,
        "n": int(len(mu.active())), "m": int(len(nu.active())),
        "peak_lp_variables": max(t["support_size"] for t in levels),
    }
    if args.validate != "none":
        mx, l2 = error_metrics(tmap, ANALYTIC_MAPS[args.validate])
        summary["errors"] = {"oracle": args.validate, "max": mx, "l2": l2}
    _write_summary(out, summary, {"total_seconds": time.perf_counter() - t0,
                                  "level_seconds": secs, "peak_rss_kb": _peak_rss_kb()})
    print(f"objective {plan.objective:.17g}  nnz {plan.nnz}  -> {out}")
    return 0


def active_cells(plan, mu) -> np.ndarray:
    """Source cells whose transported mass exceeds half their capacity."""
    rowsum = np.bincount(plan.rows, weights=plan.mass, minlength=plan.n)
    return (rowsum > 0.5 * mu.weights) & (mu.weights > 0)


def cmd_partial(args) -> int:
    bad = [f for f in args.mass if not 0 < f <= 1]
    if bad:
        raise ValueError(f"mass fractions must lie in (0, 1], got {bad[0]}")
    t0 = time.perf_counter()
    source, target = _density(args.source, args.seed), _density(args.target, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs, secs = [], []
    for k, frac in enumerate(args.mass):
        plan, mu, nu, traces = multiscale_solve(source, target, args.cost, _config(args),
                                                problem="partial", mass=frac)
        write_plan(out / f"plan_{k}.coo", plan)
        active = active_cells(plan, mu)
        _write_cells(out, f"active_{k}", mu.grid, active.astype(float))
        levels, level_secs = _split_traces(traces)
        secs.append(level_secs)
        runs.append({"mass": frac, "objective": plan.objective, "nnz": plan.nnz,
                     "active_cells": int(active.sum()), "levels": levels})
    objs = [r["objective"] for r in runs]
    summary = {
        "command": "partial",
        "problem": {"source": args.source, "target": args.target, "seed": args.seed},
        "config": _config_echo(args),
        "runs": runs,
        "monotone": bool(all(b >= a for a, b in zip(objs, objs[1:]))),
        "peak_lp_variables": max(t["support_size"] for r in runs for t in r["levels"]),
    }
    _write_summary(out, summary, {"total_seconds": time.perf_counter() - t0,
                                  "level_seconds": secs, "peak_rss_kb": _peak_rss_kb()})
    for r in runs:
        print(f"mass {r['mass']:g}  objective {r['objective']:.17g}")
    return 0


def cmd_barycenter(args) -> int:
    t0 = time.perf_counter()
    densities = [_density(s, args.seed) for s in args.measures]
    k = len(densities)
    weights = args.weights if args.weights is not None else [1.0 / k] * k
    if len(weights) != k:
        raise ValueError(f"{k} measures but {len(weights)} weights")
    total = math.fsum(weights)
    if abs(total - 1) > 1e-6:
        raise ValueError(f"weights must sum to 1, got {total:g}")
    weights = [w / total for w in weights]
    result, traces = multiscale_barycenter(
        densities, weights, args.cost, coarse_n=args.coarse, levels=args.levels,
        dilation_radius=args.dilate,
        options=SolverOptions(pricing=args.pricing, backend=args.backend))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = result.rho.grid
    _write_cells(out, "barycenter", grid, result.rho.weights)
    _write_smoothed(out, measure_cloud(result.rho), grid, args.sigma)
    for i, plan in enumerate(result.plans):
        write_plan(out / f"coupling_{i}.coo", plan)
    levels, secs = _split_traces(traces)
    summary = {
        "command": "barycenter",
        "problem": {"measures": args.measures, "weights": weights, "seed": args.seed},
        "config": _config_echo(args),
        "levels": levels,
        "objective": result.objective,
        "lp_objective": result.lp_objective,
        "support_cells": int(np.count_nonzero(result.rho.weights)),
        "peak_lp_variables": max(t["variables"] for t in levels),
    }
    _write_summary(out, summary, {"total_seconds": time.perf_counter() - t0,
                                  "level_seconds": secs, "peak_rss_kb": _peak_rss_kb()})
    print(f"objective {result.objective:.17g}  -> {out}")
    return 0


def bench_rows(sizes, coarse: int = 16, cost: CostSpec = CostSpec(2.0), radius: int = 1,
               options: SolverOptions = SolverOptions()) -> list[dict]:
    """Square to diamond at each finest resolution ``N`` (a power-of-two multiple of ``coarse``)."""
    source = preset_density("uniform_square")
    target = preset_density("uniform_diamond")
    rows = []
    for n in sizes:
        levels = math.log2(n / coarse)
        if n < coarse or levels != int(levels):
            raise ValueError(f"size {n} is not coarse * 2^k for coarse={coarse}")
        cfg = MultiscaleConfig(coarse_n=coarse, levels=int(levels), dilation_radius=radius,
                               options=options)
        t0 = time.perf_counter()
        plan, mu, nu, traces = multiscale_solve(source, target, cost, cfg)
        secs = time.perf_counter() - t0
        rows.append({
            "N": n, "size": 2 * n * n, "seconds": secs,
            "peak_lp_variables": max(t.support_size for t in traces),
            "objective": plan.objective,
            "support_per_level": [t.support_size for t in traces],
            "nodes_per_level": [t.n + t.m for t in traces],
            "retries": sum(t.retries for t in traces),
        })
    return rows


def loglog_slope(x, y) -> float:
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    rows = bench_rows(args.sizes, args.coarse, args.cost, args.dilate,
                      SolverOptions(pricing=args.pricing, backend=args.backend))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "2N^2", "seconds", "peak_lp_variables", "support_per_level"])
        for r in rows:
            w.writerow([r["N"], r["size"], f"{r['seconds']:.6f}", r["peak_lp_variables"],
                        ";".join(map(str, r["support_per_level"]))])
    slope = loglog_slope([r["size"] for r in rows], [r["seconds"] for r in rows])
    summary = {
        "command": "bench",
        "config": _config_echo(args),
        "rows": [{k: v for k, v in r.items() if k != "seconds"} for r in rows],
    }
    _write_summary(out, summary, {"total_seconds": time.perf_counter() - t0,
                                  "seconds": [r["seconds"] for r in rows], "slope": slope,
                                  "peak_rss_kb": _peak_rss_kb()})
    for r in rows:
        print(f"N={r['N']:5d}  2N^2={r['size']:8d}  {r['seconds']:9.3f}s  "
              f"peak |K|={r['peak_lp_variables']}")
    print(f"log-log slope of time vs 2N^2: {slope:.3f}")
    return 0


COMMANDS = {"solve": cmd_solve, "partial": cmd_partial, "barycenter": cmd_barycenter,
            "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.sigma <= 0:
        print("msot: error: --sigma must be positive", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (TransportError, ValueError, OSError) as exc:
        print(f"msot: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
