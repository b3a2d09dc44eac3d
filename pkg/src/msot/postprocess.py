"""From plans to maps, point clouds and smoothed rasters, plus exact maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .errors import TransportError
from .grid import Grid, write_grid_file
from .lp_core import Plan
from .measure import DiscreteMeasure
from .presets import dq, q

TRUNCATE = 4.0


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Source cells with positive mass, each sent to one barycentric target.

    ``index`` holds the source grid indices, ``points`` their centres.
    """

    index: np.ndarray
    points: np.ndarray
    mass: np.ndarray
    target: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    @property
    def total(self) -> float:
        return float(math.fsum(self.mass))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(math.fsum(self.weights))


@dataclass(frozen=True, eq=False)
class RasterDensity:
    """Pixel values over the box ``[lo, hi]``; ``values`` has one axis per dimension."""

    values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def pixel(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.values.shape)

    @property
    def pixel_volume(self) -> float:
        return float(np.prod(self.pixel))

    def integral(self) -> float:
        return float(math.fsum(self.values.ravel())) * self.pixel_volume

    def centers(self, axis: int) -> np.ndarray:
        return self.lo[axis] + (np.arange(self.values.shape[axis]) + 0.5) * self.pixel[axis]


def barycentric_project(plan: Plan, mu: DiscreteMeasure, target_grid: Grid) -> TransportMap:
    """Send each source cell to the plan-weighted mean of its targets.

    Balanced plans must cover every cell with ``mu_i > 0``; partial plans
    keep only the rows they move, with the moved mass.
    """
    if plan.n != len(mu) or plan.m != len(target_grid):
        raise ValueError("plan dimensions do not match the measure and target grid")
    rowsum = np.bincount(plan.rows, weights=plan.mass, minlength=plan.n)
    if plan.partial:
        index = np.flatnonzero(rowsum > 0)
        mass = rowsum[index]
    else:
        index = mu.active()
        missing = index[rowsum[index] <= 0]
        if len(missing):
            raise TransportError(f"{len(missing)} source cells with positive mass carry no "
                                 f"plan mass (first: {int(missing[0])})")
        mass = mu.weights[index]
    Y = target_grid.centers
    acc = np.zeros((plan.n, Y.shape[1]))
    np.add.at(acc, plan.rows, plan.mass[:, None] * Y[plan.cols])
    target = acc[index] / rowsum[index, None]
    return TransportMap(index, mu.points[index], mass, target)


def pushforward(tmap: TransportMap) -> PointCloud:
    return PointCloud(tmap.target.copy(), tmap.mass.copy())


def measure_cloud(measure: DiscreteMeasure) -> PointCloud:
    idx = measure.active()
    return PointCloud(measure.points[idx], measure.weights[idx])


def _axis_kernel(centers: np.ndarray, coords: np.ndarray, sigma: float, width: float):
    """Sparse ``(pixels, points)`` matrix of truncated 1-d Gaussians.

    Each column sums to ``1 / width`` so a point's kernel integrates to one
    over the raster even when truncated by its edge.
    """
    lo, step = centers[0] - width / 2, width
    reach = int(math.ceil(TRUNCATE * sigma / step))
    first = np.floor((coords - lo) / step).astype(np.int64) - reach
    span = np.arange(2 * reach + 1)
    pix = first[:, None] + span[None, :]
    ok = (pix >= 0) & (pix < len(centers))
    d = centers[np.clip(pix, 0, len(centers) - 1)] - coords[:, None]
    w = np.where(ok & (np.abs(d) <= TRUNCATE * sigma), np.exp(-0.5 * (d / sigma) ** 2), 0.0)
    s = w.sum(axis=1, keepdims=True)
    # a point farther than the truncation radius from every pixel keeps its
    # mass on the nearest one
    empty = s[:, 0] <= 0
    if np.any(empty):
        near = np.clip(np.rint((coords[empty] - centers[0]) / step), 0, len(centers) - 1)
        w[empty] = 0.0
        w[empty, 0] = 1.0
        pix[empty, 0] = near.astype(np.int64)
        ok[empty, 0] = True
        s[empty] = 1.0
    w = w / (s * step)
    cols = np.repeat(np.arange(len(coords)), pix.shape[1])
    keep = ok.ravel() & (w.ravel() != 0)
    return sparse.csr_matrix((w.ravel()[keep], (pix.ravel()[keep], cols[keep])),
                             shape=(len(centers), len(coords)))


def smooth(cloud: PointCloud, sigma: float, shape: Sequence[int], lo, hi,
           normalize: bool = True) -> RasterDensity:
    """Replace each Dirac by a Gaussian of width ``sigma`` on a pixel raster.

    Kernels are products of 1-d Gaussians truncated at ``4 sigma`` per axis
    and normalised per point, so each point keeps exactly its mass.
    ``normalize`` rescales the raster to unit integral afterwards.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    shape = tuple(int(s) for s in shape)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = len(shape)
    pts = np.asarray(cloud.points, dtype=float).reshape(-1, d)
    widths = (hi - lo) / np.asarray(shape)
    kern = [_axis_kernel(lo[k] + (np.arange(shape[k]) + 0.5) * widths[k], pts[:, k], sigma,
                         widths[k]) for k in range(d)]
    weights = np.asarray(cloud.weights, dtype=float)
    if d == 1:
        values = kern[0] @ weights
    elif d == 2:
        values = (kern[0] @ sparse.diags(weights) @ kern[1].T).toarray()
    else:
        # generic path: accumulate point by point over the separable kernels
        dense = [k.toarray() for k in kern]
        values = np.zeros(shape)
        for p, w in enumerate(weights):
            term = w
            for k in range(d):
                term = np.multiply.outer(term, dense[k][:, p])
            values += term
    values = np.asarray(values, dtype=float).reshape(shape)
    raster = RasterDensity(values, lo, hi)
    if normalize:
        total = raster.integral()
        if total > 0:
            raster = RasterDensity(values / total, lo, hi)
    return raster


def raster_for(grid: Grid, lo=None, hi=None, oversample: int = 1) -> tuple:
    """Raster ``(shape, lo, hi)`` aligned with ``grid`` cells over ``[lo, hi]``."""
    lo = np.asarray(grid.mask.lo if lo is None else lo, dtype=float)
    hi = np.asarray(grid.mask.hi if hi is None else hi, dtype=float)
    step = grid.h / oversample
    shape = tuple(int(math.ceil((b - a) / step - 1e-9)) for a, b in zip(lo, hi))
    return shape, lo, lo + np.asarray(shape) * step


def split_circle_map(x: np.ndarray, shift: float = 0.5) -> np.ndarray:
    """Exact map of the split circle: ``(x1 + shift sign(x1), x2)`` with ``sign(0) = 0``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = x.copy()
    out[:, 0] += shift * np.sign(x[:, 0])
    return out


def ex33_map(x: np.ndarray) -> np.ndarray:
    """Exact map of the oscillatory example: gradient of ``|x|^2/2 + 4 q(x1) q(x2)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a, b = x[:, 0], x[:, 1]
    return np.column_stack([a + 4 * dq(a) * q(b), b + 4 * q(a) * dq(b)])


ANALYTIC_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "ex33": ex33_map,
    "split_circle": split_circle_map,
}


def analytic_map(preset: str, x) -> np.ndarray:
    try:
        fn = ANALYTIC_MAPS[preset]
    except KeyError:
        raise ValueError(f"no exact map for {preset!r}; have {sorted(ANALYTIC_MAPS)}") from None
    out = fn(x)
    return out[0] if np.ndim(x) == 1 else out


def error_metrics(tmap: TransportMap, exact: Callable[[np.ndarray], np.ndarray]
                  ) -> tuple[float, float]:
    """``(max_i |ybar_i - T(x_i)|, sqrt(sum_i mu_i |ybar_i - T(x_i)|^2))``."""
    err = np.linalg.norm(tmap.target - exact(tmap.points), axis=1)
    if len(err) == 0:
        return 0.0, 0.0
    return float(err.max()), float(math.sqrt(math.fsum(tmap.mass * err ** 2)))


def write_map(path, tmap: TransportMap) -> None:
    rows = np.column_stack([tmap.points, tmap.target, tmap.mass])
    lines = [" ".join(f"{v:.17g}" for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_map(path) -> TransportMap:
    data = np.loadtxt(path, ndmin=2)
    d = (data.shape[1] - 1) // 2
    return TransportMap(np.arange(len(data)), data[:, :d], data[:, -1], data[:, d:2 * d])


def write_raster(path, raster: RasterDensity) -> None:
    write_grid_file(path, raster.values, raster.lo, raster.hi)


def write_pgm(path, raster: RasterDensity, vmax: Optional[float] = None) -> None:
    """8-bit grayscale image of a 2-d raster; first axis runs left to right."""
    if raster.values.ndim != 2:
        raise ValueError("PGM output needs a 2-d raster")
    img = raster.values.T[::-1]
    top = float(img.max()) if vmax is None else vmax
    scaled = np.zeros(img.shape) if top <= 0 else np.clip(img / top, 0, 1)
    data = np.rint(scaled * 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())
