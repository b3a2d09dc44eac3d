"""Wasserstein barycenters as one joint linear program.

The joint LP has a coupling per input measure plus the barycenter weights
``rho`` on a common support grid.  HiGHS solves it; each coupling is then
re-solved exactly against the returned ``rho`` so every plan carries exact
duals and a basic support.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InfeasibleSupportError, MultiscaleError, TransportError
from .grid import Grid, Mask, build_grid, refine
from .lp_core import (DEFAULT_OPTIONS, Plan, SolverOptions, SupportSet, _pair_costs,
                      solve_sparse)
from .measure import CostSpec, DiscreteMeasure, discretize
from .presets import Density

WEIGHT_TOL = 1e-12


@dataclass
class BarycenterResult:
    rho: DiscreteMeasure
    plans: list
    objective: float
    lp_objective: float
    variables: int


def _check_weights(lambdas, count: int) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if count < 2:
        raise ValueError("a barycenter needs at least two measures")
    if lam.shape != (count,):
        raise ValueError(f"expected {count} weights, got {lam.size}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("weights must be finite and nonnegative")
    if abs(lam.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1, got {lam.sum():.17g}")
    return lam


def support_grid_for(measures: Sequence[DiscreteMeasure], h: Optional[float] = None) -> Grid:
    """Full grid over the common bounding box at the finest input spacing."""
    lo = np.min([m.grid.mask.lo for m in measures], axis=0)
    hi = np.max([m.grid.mask.hi for m in measures], axis=0)
    h = min(m.grid.h for m in measures) if h is None else h
    return build_grid(Mask.box(lo, hi, "barycenter_box"), h)


def _arc_lists(measures, grid, couplings_support):
    out = []
    for k, nu in enumerate(measures):
        if couplings_support is None or couplings_support[k] is None:
            rows = np.repeat(np.arange(len(grid)), len(nu.active()))
            cols = np.tile(nu.active(), len(grid))
        else:
            sup = couplings_support[k]
            if (sup.n, sup.m) != (len(grid), len(nu)):
                raise ValueError(f"coupling support {k} does not match grid and measure sizes")
            rows, cols = sup.rows, sup.cols
            keep = nu.weights[cols] > 0
            rows, cols = rows[keep], cols[keep]
        out.append((rows, cols))
    return out


def _joint_lp(measures, lam, cost, grid, arcs):
    """Assemble and solve the joint LP; returns rho and the raw objective."""
    nz = len(grid)
    rhs, obj = [], []
    offset = 0
    row_base = 0
    ri, ci, vals = [], [], []
    for k, (nu, (rows, cols)) in enumerate(zip(measures, arcs)):
        E = len(rows)
        var = offset + np.arange(E)
        # rho-side marginal: sum_j pi_zj - rho_z = 0
        ri.append(row_base + rows); ci.append(var); vals.append(np.ones(E))
        ri.append(row_base + np.arange(nz)); ci.append(-1 - np.arange(nz)); vals.append(-np.ones(nz))
        rhs.append(np.zeros(nz))
        # measure-side marginal
        ri.append(row_base + nz + cols); ci.append(var); vals.append(np.ones(E))
        rhs.append(nu.weights)
        obj.append(lam[k] * _pair_costs(cost, _GridMeasure(grid), nu, rows, cols))
        offset += E
        row_base += nz + len(nu)
    nvar = offset + nz
    ci = [np.where(c < 0, offset + (-1 - c), c) for c in ci]
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))),
                          shape=(row_base, nvar))
    c = np.concatenate(obj + [np.zeros(nz)])
    res = linprog(c, A_eq=A, b_eq=np.concatenate(rhs), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        raise InfeasibleSupportError("barycenter LP is infeasible on the admitted couplings")
    if res.status != 0:
        raise TransportError(f"barycenter LP failed: {res.message}")
    return res.x[offset:], float(res.fun), nvar


class _GridMeasure:
    """Stand-in exposing ``points`` for cost evaluation on the support grid."""

    def __init__(self, grid):
        self.points = grid.centers


def _clean_rho(x: np.ndarray, grid: Grid) -> DiscreteMeasure:
    w = np.where(x > 0, x, 0.0)
    total = math.fsum(w)
    # rescaling by a sum that is already 1 up to rounding would only add noise
    if abs(total - 1.0) > 8 * np.finfo(float).eps:
        w = w / total
    return DiscreteMeasure(grid, w)


def _place_on(measure: DiscreteMeasure, grid: Grid) -> Optional[DiscreteMeasure]:
    """``measure`` moved onto ``grid`` cell for cell, or None if some mass is off the lattice."""
    idx = measure.active()
    pts = measure.points[idx]
    coords = (pts - np.asarray(grid.lo)) / grid.h - 0.5
    lattice = np.rint(coords)
    if not np.allclose(coords, lattice, rtol=0, atol=1e-9):
        return None
    cells = grid.lookup(lattice.astype(np.int64))
    if np.any(cells < 0):
        return None
    w = np.zeros(len(grid))
    w[cells] = measure.weights[idx]
    return DiscreteMeasure(grid, w)


def solve_barycenter(measures: Sequence[DiscreteMeasure], lambdas, cost: CostSpec = CostSpec(),
                     support_grid: Optional[Grid] = None,
                     couplings_support: Optional[Sequence[Optional[SupportSet]]] = None,
                     options: SolverOptions = DEFAULT_OPTIONS) -> BarycenterResult:
    """Minimise ``sum_k lambda_k W_c(rho, nu_k)`` over ``rho`` on ``support_grid``.

    Couplings are indexed ``(grid cell, cell of nu_k)``.  A weight of zero
    keeps its measure as a feasibility constraint only.
    """
    measures = list(measures)
    lam = _check_weights(lambdas, len(measures))
    grid = support_grid_for(measures) if support_grid is None else support_grid
    arcs = _arc_lists(measures, grid, couplings_support)
    # under a power cost, a unit weight makes its own measure the unique
    # zero-cost minimiser
    rho = _place_on(measures[int(np.argmax(lam))], grid) if lam.max() == 1.0 and cost.func is None else None
    if rho is None:
        x, lp_obj, nvar = _joint_lp(measures, lam, cost, grid, arcs)
        rho = _clean_rho(x, grid)
    else:
        lp_obj, nvar = 0.0, sum(len(r) for r, _ in arcs) + len(grid)
    plans = []
    for nu, (rows, cols) in zip(measures, arcs):
        sup = SupportSet.from_pairs(rows, cols, len(grid), len(nu), grid.level)
        try:
            plans.append(solve_sparse(rho, nu, cost, sup, options))
        except InfeasibleSupportError:
            # rounding in rho can strand a sliver of mass; the full problem
            # always routes it
            plans.append(solve_sparse(rho, nu, cost, SupportSet.full(len(grid), len(nu)),
                                      options))
    objective = float(sum(l * p.objective for l, p in zip(lam, plans)))
    return BarycenterResult(rho, plans, objective, lp_obj, nvar)


@dataclass
class BarycenterTrace:
    level: int
    grid_cells: int
    variables: int
    objective: float
    seconds: float
    retries: int


def multiscale_barycenter(densities: Sequence[Density], lambdas, cost: CostSpec = CostSpec(),
                          coarse_n: int = 16, levels: int = 0, dilation_radius: int = 1,
                          max_retries: int = 3, options: SolverOptions = DEFAULT_OPTIONS):
    """Coarse-to-fine barycenter; returns ``(result, traces)``.

    All measures and the barycenter grid share one spacing, set by the
    largest bounding box side over ``coarse_n``.  Coupling supports are
    lifted and dilated on the fine grids as in :func:`multiscale_solve`.
    """
    from .multiscale import dilate, lift_support, touches_boundary

    masks = [d.mask for d in densities]
    lo = np.min([m.lo for m in masks], axis=0)
    hi = np.max([m.hi for m in masks], axis=0)
    h = float(np.max(hi - lo)) / coarse_n
    box = Mask.box(lo, hi, "barycenter_box")
    # every grid shares the box origin so lattices line up across measures
    grids = [build_grid(_reboxed(m, lo, hi), h) for m in masks]
    zgrid = build_grid(box, h)
    measures = [discretize(d.density, g) for d, g in zip(densities, grids)]

    t0 = time.perf_counter()
    result = solve_barycenter(measures, lambdas, cost, zgrid, None, options)
    traces = [BarycenterTrace(0, len(zgrid), result.variables, result.objective,
                              time.perf_counter() - t0, 0)]
    for level in range(1, levels + 1):
        t0 = time.perf_counter()
        fz, cz = refine(zgrid)
        refined = [refine(g) for g in grids]
        fgrids = [r[0] for r in refined]
        fmeas = [discretize(d.density, g) for d, g in zip(densities, fgrids)]
        radius = dilation_radius
        for attempt in range(max_retries + 1):
            sups = []
            for plan, (fg, cm), nu in zip(result.plans, refined, fmeas):
                lifted = lift_support(plan.support(level - 1), cz, cm)
                sups.append(dilate(lifted, fz, fg, radius, None, nu))
            new = solve_barycenter(fmeas, lambdas, cost, fz, sups, options)
            touch = any(touches_boundary(p, s, fz, fg, None, nu, cost)
                        for p, s, fg, nu in zip(new.plans, sups, fgrids, fmeas))
            if not touch:
                break
            if attempt == max_retries:
                raise MultiscaleError(f"barycenter level {level}: couplings reach the edge "
                                      f"of the admitted set after {max_retries} retries",
                                      trace=traces)
            radius += 1
        result, zgrid, grids, measures = new, fz, fgrids, fmeas
        traces.append(BarycenterTrace(level, len(zgrid), result.variables, result.objective,
                                      time.perf_counter() - t0, attempt))
    return result, traces


def _reboxed(mask: Mask, lo, hi) -> Mask:
    return Mask(tuple(map(float, lo)), tuple(map(float, hi)), mask.contains, mask.name)
