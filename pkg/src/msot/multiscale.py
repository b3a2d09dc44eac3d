"""Coarse-to-fine transport: full LP on coarse grids, sparse LPs above.

Each refinement takes the previous plan's support, grows it by a Chebyshev
neighbourhood in both spaces, maps it onto the children of the refined grids
and re-solves on freshly discretised measures.  A level is re-solved with a
wider neighbourhood when its solution reaches the edge of the admitted set
or the admitted set cannot carry the mass.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InfeasibleSupportError, MultiscaleError
from .grid import ChildMap, Grid, build_grid, grid_with_cells, neighbor_table, refine
from .lp_core import (DEFAULT_OPTIONS, Plan, SolverOptions, SupportSet, solve_full,
                      solve_partial, solve_sparse)
from .measure import CostSpec, DiscreteMeasure, discretize
from .presets import Density

PROBLEMS = ("balanced", "partial")
SPACINGS = ("domain", "common")
GROWTHS = ("local", "global")


@dataclass
class MultiscaleConfig:
    """Refinement schedule.

    ``dilate_at`` picks where neighbourhoods are taken: ``"fine"`` lifts the
    support first and dilates on the refined grids, ``"coarse"`` dilates
    before lifting.  With ``priced_boundary`` a solution only counts as
    touching the edge of the admitted set when an excluded neighbour pair
    has negative reduced cost; otherwise any excluded neighbour pair counts.
    ``spacing="domain"`` puts ``coarse_n`` cells along each domain's longest
    side; ``"common"`` gives both grids the smaller of the two spacings.
    On a touch, ``growth="global"`` re-solves the level with the radius
    increased by one, while ``"local"`` only adds the ``dilation_radius``
    neighbourhood of the offending pairs and warm-starts from the level's duals.
    """

    coarse_n: int = 16
    levels: int = 0
    dilation_radius: int = 1
    dilation_repeats: int = 0
    max_retries: int = 3
    dilate_at: str = "fine"
    priced_boundary: bool = True
    spacing: str = "common"
    growth: str = "local"
    options: SolverOptions = field(default_factory=lambda: DEFAULT_OPTIONS)

    def __post_init__(self):
        if self.coarse_n < 1:
            raise ValueError("coarse_n must be positive")
        if self.levels < 0:
            raise ValueError("levels must be nonnegative")
        if self.dilation_radius < 1:
            raise ValueError("dilation_radius must be at least 1")
        if self.dilation_repeats < 0 or self.max_retries < 0:
            raise ValueError("dilation_repeats and max_retries must be nonnegative")
        if self.dilate_at not in ("fine", "coarse"):
            raise ValueError("dilate_at must be 'fine' or 'coarse'")
        if self.spacing not in SPACINGS:
            raise ValueError(f"spacing must be one of {SPACINGS}")
        if self.growth not in GROWTHS:
            raise ValueError(f"growth must be one of {GROWTHS}")


@dataclass
class LevelTrace:
    level: int
    n: int
    m: int
    support_size: int
    nnz: int
    objective: float
    iterations: int
    seconds: float
    boundary_touch: bool
    radius: int
    retries: int

    def as_dict(self) -> dict:
        return asdict(self)


def extract_support(plan: Plan, level: int = 0) -> SupportSet:
    """Pairs carrying positive mass."""
    return plan.support(level)


def _expand(support: SupportSet, tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    """Keys of ``tx[i] x ty[j]`` for every pair, duplicates included."""
    rows, cols = support.rows, support.cols
    nx, ny = tx[rows], ty[cols]
    keys = nx[:, :, None] * support.m + ny[:, None, :]
    ok = (nx[:, :, None] >= 0) & (ny[:, None, :] >= 0)
    return keys[ok]


def dilate(support: SupportSet, grid_x: Grid, grid_y: Grid, radius: int,
           mu: Optional[DiscreteMeasure] = None, nu: Optional[DiscreteMeasure] = None,
           chunk: int = 1 << 16) -> SupportSet:
    """Union of ``neighbors(i) x neighbors(j)`` over the support.

    When measures are given, cells without mass are dropped.
    """
    if len(support) == 0:
        return support
    tx = neighbor_table(grid_x, radius)
    ty = neighbor_table(grid_y, radius)
    if mu is not None:
        tx = np.where(tx >= 0, np.where(mu.weights[np.maximum(tx, 0)] > 0, tx, -1), -1)
    if nu is not None:
        ty = np.where(ty >= 0, np.where(nu.weights[np.maximum(ty, 0)] > 0, ty, -1), -1)
    parts = []
    for s in range(0, len(support), chunk):
        sub = SupportSet(support.keys[s:s + chunk], support.n, support.m)
        parts.append(np.unique(_expand(sub, tx, ty)))
    # the stencil contains the zero offset, so every input pair on massive
    # cells survives
    return SupportSet(np.unique(np.concatenate(parts)), support.n, support.m, support.level)


def lift_support(support: SupportSet, child_x: ChildMap, child_y: ChildMap) -> SupportSet:
    """All fine pairs whose parents form an admitted coarse pair."""
    n_f, m_f = len(child_x.parent), len(child_y.parent)
    if len(support) == 0:
        return SupportSet(np.empty(0, np.int64), n_f, m_f, support.level + 1)
    rows, cols = support.rows, support.cols
    cx = child_x.counts()[rows]
    cy = child_y.counts()[cols]
    tot = cx * cy
    start = np.repeat(np.cumsum(tot) - tot, tot)
    k = np.arange(int(tot.sum()), dtype=np.int64) - start
    cy_r = np.repeat(cy, tot)
    a, b = k // cy_r, k % cy_r
    fi = child_x.children[np.repeat(child_x.offsets[rows], tot) + a]
    fj = child_y.children[np.repeat(child_y.offsets[cols], tot) + b]
    # every fine cell has one parent, so distinct coarse pairs give distinct keys
    return SupportSet(np.sort(fi * m_f + fj), n_f, m_f, support.level + 1)


def boundary_pairs(plan: Plan, support: SupportSet, grid_x: Grid, grid_y: Grid,
                   mu: Optional[DiscreteMeasure] = None,
                   nu: Optional[DiscreteMeasure] = None,
                   cost: Optional[CostSpec] = None, tol: float = 1e-10) -> SupportSet:
    """Radius-1 neighbour pairs of plan entries that lie outside ``support``.

    With ``cost`` given, only outside pairs that would improve the plan
    (negative reduced cost under the plan's duals) are kept.
    """
    hood = dilate(plan.support(), grid_x, grid_y, 1, mu, nu)
    out = ~support.contains(hood.rows, hood.cols)
    keys = hood.keys[out]
    if cost is not None and len(keys):
        rows, cols = np.divmod(keys, support.m)
        rc = cost(grid_x.centers[rows], grid_y.centers[cols]) - plan.u[rows] - plan.v[cols]
        keys = keys[rc < -tol * max(1.0, float(np.max(np.abs(rc))))]
    return SupportSet(keys, support.n, support.m, support.level)


def touches_boundary(plan: Plan, support: SupportSet, grid_x: Grid, grid_y: Grid,
                     mu: Optional[DiscreteMeasure] = None,
                     nu: Optional[DiscreteMeasure] = None,
                     cost: Optional[CostSpec] = None, tol: float = 1e-10) -> bool:
    """True when :func:`boundary_pairs` finds anything."""
    return len(boundary_pairs(plan, support, grid_x, grid_y, mu, nu, cost, tol)) > 0


def _grow(support: SupportSet, gx: Grid, gy: Grid, cmx: ChildMap, cmy: ChildMap,
          fx: Grid, fy: Grid, mu: DiscreteMeasure, nu: DiscreteMeasure,
          radius: int, repeats: int, where: str) -> SupportSet:
    if where == "coarse":
        for _ in range(1 + repeats):
            support = dilate(support, gx, gy, radius)
        return lift_support(support, cmx, cmy)
    support = lift_support(support, cmx, cmy)
    for _ in range(1 + repeats):
        support = dilate(support, fx, fy, radius, mu, nu)
    return support


def _solve(problem, mu, nu, cost, support, mass, options, guess=None):
    if problem == "partial":
        return solve_partial(mu, nu, cost, mass, support, options)
    if support is None:
        return solve_full(mu, nu, cost, options)
    return solve_sparse(mu, nu, cost, support, options, guess)


def interpolate_cells(coarse: Grid, values: np.ndarray, fine: Grid) -> np.ndarray:
    """Multilinear interpolation of per-cell values onto another grid.

    Lattice cells outside the coarse grid (or with NaN values) take the value
    of the nearest valid cell first, so boundary cells extrapolate smoothly.
    """
    from scipy.interpolate import RegularGridInterpolator
    from scipy.ndimage import distance_transform_edt

    full = np.full(coarse.shape, np.nan)
    full[tuple(coarse.lattice.T)] = values
    bad = ~np.isfinite(full)
    if bad.all():
        return np.zeros(len(fine))
    if bad.any():
        idx = distance_transform_edt(bad, return_distances=False, return_indices=True)
        full = full[tuple(idx)]
    axes = [coarse.lo[k] + (np.arange(s) + 0.5) * coarse.h for k, s in enumerate(coarse.shape)]
    method = "linear" if min(coarse.shape) >= 2 else "nearest"
    interp = RegularGridInterpolator(axes, full, method=method, bounds_error=False,
                                     fill_value=None)
    return interp(fine.centers)


def grid_pair(source: Density, target: Density, n: int,
              spacing: str = "common") -> tuple[Grid, Grid]:
    gx, gy = grid_with_cells(source.mask, n), grid_with_cells(target.mask, n)
    if spacing == "common" and gx.h != gy.h:
        h = min(gx.h, gy.h)
        gx, gy = build_grid(source.mask, h), build_grid(target.mask, h)
    return gx, gy


def multiscale_solve(source: Density, target: Density, cost: CostSpec = CostSpec(),
                     config: MultiscaleConfig = MultiscaleConfig(), problem: str = "balanced",
                     mass: Optional[float] = None):
    """Solve on ``coarse_n`` cells per domain, then refine ``levels`` times.

    Returns ``(plan, mu, nu, traces)`` where ``mu``/``nu`` are the finest
    discrete measures the plan refers to.  ``mass`` is the transported mass
    (fraction of the unit total) for ``problem="partial"``.
    """
    if problem not in PROBLEMS:
        raise ValueError(f"problem must be one of {PROBLEMS}")
    if problem == "partial" and mass is None:
        raise ValueError("partial problems need a transported mass")
    gx, gy = grid_pair(source, target, config.coarse_n, config.spacing)
    mu, nu = discretize(source.density, gx), discretize(target.density, gy)
    traces: list[LevelTrace] = []

    t0 = time.perf_counter()
    plan = _solve(problem, mu, nu, cost, None, mass, config.options)
    traces.append(LevelTrace(0, len(mu.active()), len(nu.active()),
                             len(mu.active()) * len(nu.active()), plan.nnz, plan.objective,
                             plan.iterations, time.perf_counter() - t0, False, 0, 0))

    for level in range(1, config.levels + 1):
        t0 = time.perf_counter()
        coarse = extract_support(plan, level - 1)
        fx, cmx = refine(gx)
        fy, cmy = refine(gy)
        fmu, fnu = discretize(source.density, fx), discretize(target.density, fy)
        radius = config.dilation_radius
        guess = (interpolate_cells(gx, plan.u, fx), interpolate_cells(gy, plan.v, fy))
        support = _grow(coarse, gx, gy, cmx, cmy, fx, fy, fmu, fnu, radius,
                        config.dilation_repeats, config.dilate_at)
        for attempt in range(config.max_retries + 1):
            try:
                new = _solve(problem, fmu, fnu, cost, support, mass, config.options,
                             guess)
            except InfeasibleSupportError:
                new, edge = None, None
            else:
                edge = boundary_pairs(new, support, fx, fy, fmu, fnu,
                                      cost if config.priced_boundary else None)
                if len(edge) == 0:
                    break
            if attempt == config.max_retries:
                traces.append(LevelTrace(level, len(fmu.active()), len(fnu.active()),
                                         len(support), 0 if new is None else new.nnz,
                                         np.nan if new is None else new.objective, 0,
                                         time.perf_counter() - t0, True, radius, attempt))
                raise MultiscaleError(
                    f"level {level}: support still reaches the edge of the admitted set "
                    f"after {config.max_retries} retries", trace=traces)
            if config.growth == "local" and new is not None:
                # widen only where the plan wants out, starting from its duals
                support = support.union(dilate(edge, fx, fy, radius, fmu, fnu))
                if problem == "balanced":
                    guess = (new.u, new.v)
            else:
                radius += 1
                support = _grow(coarse, gx, gy, cmx, cmy, fx, fy, fmu, fnu, radius,
                                config.dilation_repeats, config.dilate_at)
        plan, gx, gy, mu, nu = new, fx, fy, fmu, fnu
        traces.append(LevelTrace(level, len(mu.active()), len(nu.active()), len(support),
                                 plan.nnz, plan.objective, plan.iterations,
                                 time.perf_counter() - t0, attempt > 0, radius, attempt))
    return plan, mu, nu, traces
