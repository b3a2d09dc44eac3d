"""Exact transportation linear programs on discrete measures.

All solves go through one bipartite network simplex kernel (see
``_backend``).  Zero-weight cells are dropped before the kernel sees them;
their duals come back as NaN.  Reduced costs are ``c_ij - u_i - v_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ._backend import get_kernel
from .errors import (InfeasibleSupportError, IterationLimitError, TransportError,
                     UnbalancedError)
from .measure import CostSpec, DiscreteMeasure

BALANCE_TOL = 1e-12
PRICING = {"block": 0, "dantzig": 1}
STARTS = ("mincost", "northwest")


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Admitted ``(i, j)`` pairs, stored as sorted unique keys ``i * m + j``."""

    keys: np.ndarray
    n: int
    m: int
    level: int = 0

    @classmethod
    def from_pairs(cls, rows, cols, n: int, m: int, level: int = 0) -> "SupportSet":
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise IndexError("support pair outside the index range")
        return cls(np.unique(rows * m + cols), n, m, level)

    @classmethod
    def full(cls, n: int, m: int, level: int = 0) -> "SupportSet":
        return cls(np.arange(n * m, dtype=np.int64), n, m, level)

    @property
    def rows(self) -> np.ndarray:
        return self.keys // self.m

    @property
    def cols(self) -> np.ndarray:
        return self.keys % self.m

    def pairs(self) -> set:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def contains(self, rows, cols) -> np.ndarray:
        q = np.asarray(rows, dtype=np.int64) * self.m + np.asarray(cols, dtype=np.int64)
        if len(self.keys) == 0:
            return np.zeros(q.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self.keys, q), len(self.keys) - 1)
        return self.keys[pos] == q

    def union(self, other: "SupportSet") -> "SupportSet":
        if (self.n, self.m) != (other.n, other.m):
            raise ValueError("supports refer to different index spaces")
        return SupportSet(np.union1d(self.keys, other.keys), self.n, self.m, self.level)

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(eq=False)
class Plan:
    """Sparse transport plan with its dual certificate.

    ``rows, cols, mass`` are sorted by ``(i, j)``; only positive masses are
    stored.  For partial plans ``dual_dummy = (u_dummy, v_dummy)`` holds the
    potentials of the slack nodes (NaN when the slack is empty) and
    ``target_mass`` the mass that was requested.
    """

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    objective: float
    u: Optional[np.ndarray]
    v: Optional[np.ndarray]
    n: int
    m: int
    partial: bool = False
    iterations: int = 0
    degenerate: int = 0
    dual_dummy: tuple = (np.nan, np.nan)
    status: int = 0
    target_mass: float = np.nan

    @property
    def entries(self) -> list:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))

    @property
    def nnz(self) -> int:
        return len(self.mass)

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=self.n)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=self.m)

    def total(self) -> float:
        return float(self.mass.sum())

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.m))
        out[self.rows, self.cols] = self.mass
        return out

    def support(self, level: int = 0) -> SupportSet:
        return SupportSet(self.rows * self.m + self.cols, self.n, self.m, level)


# Listeners see every completed solve; the test suite uses this to certify
# each plan.  Signature: fn(plan, a, b, rows, cols, costs).

_listeners: list[Callable] = []


def add_solve_listener(fn: Callable) -> None:
    _listeners.append(fn)


def remove_solve_listener(fn: Callable) -> None:
    _listeners.remove(fn)


def _notify(plan, a, b, rows, cols, costs):
    for fn in list(_listeners):
        fn(plan, a, b, rows, cols, costs)


@dataclass
class SolverOptions:
    """Knobs passed to the simplex kernel.

    ``pricing`` is ``"block"`` (scan blocks of about sqrt(E) arcs, take the
    best in the first block that has an improving arc) or ``"dantzig"`` (full
    scan, most negative reduced cost, lowest index on ties).  ``start`` is
    the greedy initial basis: ``"mincost"`` fills arcs in increasing cost
    order, ``"northwest"`` in row-major order.
    """

    pricing: str = "block"
    start: str = "mincost"
    block_size: int = 0
    max_iter: int = 10_000_000
    bland_after: int = 1000
    tol: float = -1.0
    backend: Optional[str] = None

    def __post_init__(self):
        if self.pricing not in PRICING:
            raise ValueError(f"pricing must be one of {sorted(PRICING)}")
        if self.start not in STARTS:
            raise ValueError(f"start must be one of {STARTS}")


DEFAULT_OPTIONS = SolverOptions()


def _arc_order(costs: np.ndarray, start: str) -> np.ndarray:
    if start == "northwest":
        return np.arange(len(costs), dtype=np.int32)
    return np.argsort(costs, kind="stable").astype(np.int32)


def _run_kernel(a, b, rows, cols, costs, opts: SolverOptions, priority=None):
    """Kernel call on compacted indices; returns flow, duals and stats."""
    kernel = get_kernel(opts.backend)
    key = costs if priority is None else priority
    return kernel(len(a), len(b), rows.astype(np.int32), cols.astype(np.int32),
                  costs, a, b, _arc_order(key, opts.start),
                  pricing=PRICING[opts.pricing], block_size=opts.block_size,
                  max_iter=opts.max_iter, bland_after=opts.bland_after, tol=opts.tol)


def solve_transport(a: np.ndarray, b: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                    costs: np.ndarray, options: SolverOptions = DEFAULT_OPTIONS,
                    priority: Optional[np.ndarray] = None) -> Plan:
    """Balanced transportation LP over the arc list ``(rows, cols, costs)``.

    ``a`` and ``b`` are the full weight vectors; arcs touching zero-weight
    cells are discarded.  ``priority`` (one value per arc) replaces the cost
    as the fill order of the ``"mincost"`` start; good guesses of the
    optimal reduced costs make a good starting basis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(a.sum() - b.sum()) > BALANCE_TOL * max(1.0, a.sum()):
        raise UnbalancedError(f"source mass {a.sum():.17g} != target mass {b.sum():.17g}")
    if not (np.any(a > 0) and np.any(b > 0)):
        raise TransportError("each side needs at least one positive weight")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")

    ra = np.flatnonzero(a > 0)
    cb = np.flatnonzero(b > 0)
    rmap = np.full(len(a), -1, dtype=np.int64)
    cmap = np.full(len(b), -1, dtype=np.int64)
    rmap[ra] = np.arange(len(ra))
    cmap[cb] = np.arange(len(cb))
    keep = (rmap[rows] >= 0) & (cmap[cols] >= 0)
    rows, cols, costs = rows[keep], cols[keep], costs[keep]
    if priority is not None:
        priority = np.asarray(priority, dtype=float)[keep]

    flow, u_c, v_c, status, iters, degen, resid = _run_kernel(
        a[ra], b[cb], rmap[rows], cmap[cols], costs, options, priority)
    if status == 1:
        raise InfeasibleSupportError(
            f"admitted support cannot route all mass (residual {resid:.3g})")
    if status == 3:
        raise TransportError("simplex reported an unbounded direction")
    plan = _assemble(flow, rows, cols, costs, ra, cb, u_c, v_c, len(a), len(b), iters, degen)
    plan.status = status
    if status == 2:
        raise IterationLimitError(f"iteration limit {options.max_iter} reached", plan=plan)
    _notify(plan, a, b, rows, cols, costs)
    return plan


def _assemble(flow, rows, cols, costs, ra, cb, u_c, v_c, n, m, iters, degen) -> Plan:
    pos = flow > 0
    r, c, f = rows[pos], cols[pos], flow[pos]
    order = np.argsort(r * m + c, kind="stable")
    r, c, f = r[order], c[order], f[order]
    objective = float(np.dot(costs[pos][order], f))
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[ra] = u_c
    v[cb] = v_c
    return Plan(r, c, f, objective, u, v, n, m, iterations=int(iters), degenerate=int(degen))


def _pair_costs(cost: CostSpec, mu: DiscreteMeasure, nu: DiscreteMeasure, rows, cols,
                chunk: int = 1 << 20) -> np.ndarray:
    out = np.empty(len(rows))
    X, Y = mu.points, nu.points
    for s in range(0, len(rows), chunk):
        out[s:s + chunk] = cost(X[rows[s:s + chunk]], Y[cols[s:s + chunk]])
    return out


def _full_arcs(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec):
    ra, cb = mu.active(), nu.active()
    rows = np.repeat(ra, len(cb))
    cols = np.tile(cb, len(ra))
    costs = cost.matrix(mu.points[ra], nu.points[cb]).reshape(-1)
    return rows, cols, costs


def solve_full(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
               options: SolverOptions = DEFAULT_OPTIONS) -> Plan:
    """Optimal basic plan of the unrestricted transportation LP."""
    rows, cols, costs = _full_arcs(mu, nu, cost)
    return solve_transport(mu.weights, nu.weights, rows, cols, costs, options)


def _priority(dual_guess, rows, cols, costs):
    if dual_guess is None:
        return None
    gu, gv = (np.nan_to_num(np.asarray(g, dtype=float)) for g in dual_guess)
    return costs - gu[rows] - gv[cols]


def solve_sparse(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec,
                 support: SupportSet, options: SolverOptions = DEFAULT_OPTIONS,
                 dual_guess: Optional[tuple] = None) -> Plan:
    """Optimal plan among those supported on ``support``.

    ``dual_guess = (u, v)`` approximates the optimal potentials (for example
    from a coarser solve); the start then fills arcs by guessed reduced cost.
    Raises :class:`InfeasibleSupportError` when no such plan exists.
    """
    if (support.n, support.m) != (len(mu), len(nu)):
        raise ValueError("support does not match the measures' sizes")
    if len(support) == 0:
        raise InfeasibleSupportError("empty support")
    rows, cols = support.rows, support.cols
    costs = _pair_costs(cost, mu, nu, rows, cols)
    return solve_transport(mu.weights, nu.weights, rows, cols, costs, options,
                           _priority(dual_guess, rows, cols, costs))


def solve_partial_arrays(a, b, mass: float, rows, cols, costs,
                         options: SolverOptions = DEFAULT_OPTIONS) -> Plan:
    """Partial transport of ``mass`` over the given arcs via two slack nodes.

    A slack source absorbs ``sum(b) - mass`` and a slack target absorbs
    ``sum(a) - mass``; every real cell connects to the opposite slack at zero
    cost.  The slack-to-slack arc is omitted, which is the same as giving it
    an infinite cost.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ta, tb = float(a.sum()), float(b.sum())
    cap = min(ta, tb)
    if not (0 < mass <= cap * (1 + BALANCE_TOL)):
        raise ValueError(f"transported mass must lie in (0, {cap:.17g}], got {mass!r}")
    mass = min(mass, cap)
    n, m = len(a), len(b)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    costs = np.asarray(costs, dtype=float)
    a_ext = np.append(a, max(tb - mass, 0.0))
    b_ext = np.append(b, max(ta - mass, 0.0))
    ar, bc = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    rows_ext = np.concatenate([rows, ar, np.full(len(bc), n)])
    cols_ext = np.concatenate([cols, np.full(len(ar), m), bc])
    costs_ext = np.concatenate([costs, np.zeros(len(ar) + len(bc))])
    # listeners would see the augmented problem; silence them and report the
    # real plan instead
    saved = _listeners[:]
    _listeners.clear()
    try:
        ext = solve_transport(a_ext, b_ext, rows_ext, cols_ext, costs_ext, options)
    except IterationLimitError as exc:
        exc.plan = _strip_slack(exc.plan, n, m)
        raise
    finally:
        _listeners.extend(saved)
    plan = _strip_slack(ext, n, m)
    plan.target_mass = mass
    _notify(plan, a, b, rows, cols, costs)
    return plan


def _strip_slack(ext: Plan, n: int, m: int) -> Plan:
    real = (ext.rows < n) & (ext.cols < m)
    return Plan(ext.rows[real], ext.cols[real], ext.mass[real], ext.objective,
                ext.u[:n].copy(), ext.v[:m].copy(), n, m, partial=True,
                iterations=ext.iterations, degenerate=ext.degenerate,
                dual_dummy=(float(ext.u[n]), float(ext.v[m])), status=ext.status)


def solve_partial(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, mass: float,
                  support: Optional[SupportSet] = None,
                  options: SolverOptions = DEFAULT_OPTIONS) -> Plan:
    """Cheapest plan moving exactly ``mass`` with sub-marginal constraints."""
    if support is None:
        rows, cols, costs = _full_arcs(mu, nu, cost)
    else:
        rows, cols = support.rows, support.cols
        costs = _pair_costs(cost, mu, nu, rows, cols)
    return solve_partial_arrays(mu.weights, nu.weights, mass, rows, cols, costs, options)


# -- certificates ------------------------------------------------------------

@dataclass
class Certificate:
    """Residuals of the primal/dual optimality conditions.

    ``min_reduced_cost`` is the smallest ``c_ij - u_i - v_j`` over the
    checked pairs; ``dual_infeasibility`` is its negative part.
    """

    feasibility: float
    min_reduced_cost: float
    dual_infeasibility: float
    complementary_slackness: float
    support_size: int
    duality_gap: float
    objective: float
    dual_objective: float
    pairs_checked: int
    thresholds: dict = field(default_factory=lambda: {
        "feasibility": 1e-8, "dual_infeasibility": 1e-8, "complementary_slackness": 1e-6})

    @property
    def ok(self) -> bool:
        t = self.thresholds
        return (self.feasibility <= t["feasibility"]
                and self.dual_infeasibility <= t["dual_infeasibility"] * max(1.0, self._scale())
                and self.complementary_slackness <= t["complementary_slackness"])

    def _scale(self) -> float:
        return max(abs(self.objective), 1.0)

    def as_dict(self) -> dict:
        keys = ("feasibility", "min_reduced_cost", "dual_infeasibility",
                "complementary_slackness", "support_size", "duality_gap",
                "objective", "dual_objective", "pairs_checked")
        return {k: getattr(self, k) for k in keys}


def _min_rc(u, v, rows, cols, costs) -> float:
    if len(rows) == 0:
        return 0.0
    rc = costs - u[rows] - v[cols]
    rc = rc[np.isfinite(rc)]
    return float(rc.min()) if len(rc) else 0.0


def certify(plan: Plan, a, b, rows, cols, costs, thresholds: Optional[dict] = None
            ) -> Certificate:
    """Check ``plan`` against the LP over the admitted arcs ``(rows, cols, costs)``."""
    if plan.u is None or plan.v is None:
        raise TransportError("plan carries no duals to certify")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u, v = plan.u, plan.v
    rs, cs = plan.row_sums(), plan.col_sums()
    ra, cb = a > 0, b > 0
    pc = _lookup_costs(plan, rows, cols, costs)
    objective = float(np.dot(pc, plan.mass))
    rc_plan = pc - u[plan.rows] - v[plan.cols]
    cs_viol = float(np.max(np.abs(rc_plan))) if plan.nnz else 0.0
    min_rc = _min_rc(u, v, np.asarray(rows), np.asarray(cols), np.asarray(costs))
    if plan.partial:
        feas = max(float(np.max(rs - a, initial=0.0)), float(np.max(cs - b, initial=0.0)),
                   float(np.max(-plan.mass, initial=0.0)))
        ud, vd = plan.dual_dummy
        mass = plan.total()
        if np.isfinite(plan.target_mass):
            feas = max(feas, abs(mass - plan.target_mass))
        slack_r, slack_c = a - rs, b - cs
        # arcs to the slack nodes have zero cost
        if np.isfinite(vd):
            rc_r = -u[ra] - vd
            min_rc = min(min_rc, float(rc_r.min()))
            used = slack_r[ra] > 1e-14
            if np.any(used):
                cs_viol = max(cs_viol, float(np.max(np.abs(rc_r[used]))))
        if np.isfinite(ud):
            rc_c = -ud - v[cb]
            min_rc = min(min_rc, float(rc_c.min()))
            used = slack_c[cb] > 1e-14
            if np.any(used):
                cs_viol = max(cs_viol, float(np.max(np.abs(rc_c[used]))))
        dual = float(np.dot(u[ra], a[ra]) + np.dot(v[cb], b[cb]))
        if np.isfinite(ud):
            dual += ud * (b.sum() - mass)
        if np.isfinite(vd):
            dual += vd * (a.sum() - mass)
    else:
        feas = max(float(np.max(np.abs(rs - a))), float(np.max(np.abs(cs - b))))
        dual = float(np.dot(u[ra], a[ra]) + np.dot(v[cb], b[cb]))
    cert = Certificate(
        feasibility=feas, min_reduced_cost=min_rc, dual_infeasibility=max(0.0, -min_rc),
        complementary_slackness=cs_viol, support_size=plan.nnz,
        duality_gap=abs(objective - dual), objective=objective, dual_objective=dual,
        pairs_checked=len(rows))
    if thresholds:
        cert.thresholds.update(thresholds)
    return cert


def _lookup_costs(plan: Plan, rows, cols, costs) -> np.ndarray:
    keys = np.asarray(rows, dtype=np.int64) * plan.m + np.asarray(cols, dtype=np.int64)
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    q = plan.rows * plan.m + plan.cols
    pos = np.searchsorted(skeys, q)
    pos_c = np.minimum(pos, max(len(skeys) - 1, 0))
    if len(q) and (len(skeys) == 0 or np.any(skeys[pos_c] != q)):
        raise TransportError("plan has mass outside the admitted support")
    return np.asarray(costs, dtype=float)[order][pos_c]


def verify_optimality(plan: Plan, mu: DiscreteMeasure, nu: DiscreteMeasure,
                      cost: CostSpec = CostSpec(), support: Optional[SupportSet] = None,
                      thresholds: Optional[dict] = None, chunk: int = 1 << 22
                      ) -> Certificate:
    """Optimality report for ``plan``; reduced costs are scanned over
    ``support`` or, when omitted, over every pair of positive-mass cells."""
    if plan.u is None or plan.v is None:
        raise TransportError("plan carries no duals to certify")
    if support is not None:
        rows, cols = support.rows, support.cols
        costs = _pair_costs(cost, mu, nu, rows, cols)
        return certify(plan, mu.weights, nu.weights, rows, cols, costs, thresholds)
    # full scan in row chunks so large grids do not build an n*m matrix
    rows, cols = plan.rows, plan.cols
    costs = _pair_costs(cost, mu, nu, rows, cols)
    cert = certify(plan, mu.weights, nu.weights, rows, cols, costs, thresholds)
    cert.min_reduced_cost = min(cert.min_reduced_cost,
                                full_min_reduced_cost(plan, mu, nu, cost, chunk))
    cert.dual_infeasibility = max(0.0, -cert.min_reduced_cost)
    cert.pairs_checked = int(len(mu.active()) * len(nu.active()))
    return cert


def full_min_reduced_cost(plan: Plan, mu: DiscreteMeasure, nu: DiscreteMeasure,
                          cost: CostSpec, chunk: int = 1 << 22) -> float:
    """``min c_ij - u_i - v_j`` over all positive-mass pairs."""
    ra, cb = mu.active(), nu.active()
    X, Y = mu.points[ra], nu.points[cb]
    u, v = plan.u[ra], plan.v[cb]
    step = max(1, chunk // max(len(cb), 1))
    best = np.inf
    for s in range(0, len(ra), step):
        rc = cost.matrix(X[s:s + step], Y) - u[s:s + step, None] - v[None, :]
        best = min(best, float(rc.min()))
    return best


def violating_pairs(plan: Plan, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec,
                    tol: float, chunk: int = 1 << 22) -> tuple[np.ndarray, np.ndarray]:
    """Positive-mass pairs whose reduced cost is below ``-tol``."""
    ra, cb = mu.active(), nu.active()
    X, Y = mu.points[ra], nu.points[cb]
    u, v = plan.u[ra], plan.v[cb]
    step = max(1, chunk // max(len(cb), 1))
    out_r, out_c = [], []
    for s in range(0, len(ra), step):
        rc = cost.matrix(X[s:s + step], Y) - u[s:s + step, None] - v[None, :]
        ii, jj = np.nonzero(rc < -tol)
        out_r.append(ra[ii + s])
        out_c.append(cb[jj])
    if not out_r:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(out_r), np.concatenate(out_c)


# -- plan files --------------------------------------------------------------

def write_plan(path, plan: Plan) -> None:
    """``PLAN n m nnz objective`` then 1-based ``i j mass`` lines."""
    lines = [f"PLAN {plan.n} {plan.m} {plan.nnz} {plan.objective:.17g}"]
    lines += [f"{i + 1} {j + 1} {w:.17g}" for i, j, w in plan.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_plan(path) -> Plan:
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    if not head or head[0] != "PLAN":
        raise ValueError(f"{path}: missing PLAN header")
    n, m, nnz = int(head[1]), int(head[2]), int(head[3])
    body = np.array([ln.split() for ln in text[1:] if ln.strip()], dtype=float).reshape(-1, 3)
    if len(body) != nnz:
        raise ValueError(f"{path}: header says {nnz} entries, found {len(body)}")
    return Plan(body[:, 0].astype(np.int64) - 1, body[:, 1].astype(np.int64) - 1, body[:, 2],
                float(head[4]), None, None, n, m)
