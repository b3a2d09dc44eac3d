"""Cartesian cell-centre grids over masked domains, with refinement maps.

A grid at spacing ``h`` over the box ``[lo, hi]`` has its cell centres at
``lo + (k + 1/2) h`` for integer lattice coordinates ``k``.  A cell belongs to
the grid when its centre lies in the domain mask.  Refining halves ``h``; the
four (2^d) quadrant centres of a coarse cell sit exactly on the finer lattice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyDomainError


@dataclass(frozen=True, eq=False)
class Mask:
    """Indicator of a bounded domain.

    ``contains`` maps an ``(k, d)`` array of points to a boolean array.
    """

    lo: tuple
    hi: tuple
    contains: Callable[[np.ndarray], np.ndarray]
    name: str = "mask"

    @property
    def dim(self) -> int:
        return len(self.lo)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], name: str = "box") -> "Mask":
        lo_a = np.asarray(lo, dtype=float)
        hi_a = np.asarray(hi, dtype=float)

        def inside(p):
            p = np.atleast_2d(p)
            return np.all((p >= lo_a) & (p <= hi_a), axis=1)

        return cls(tuple(lo_a), tuple(hi_a), inside, name)

    @classmethod
    def from_raster(cls, values: np.ndarray, lo: Sequence[float], hi: Sequence[float],
                    name: str = "raster") -> "Mask":
        """Binary raster over ``[lo, hi]``; queries use the nearest pixel."""
        vals = np.asarray(values) != 0
        lo_a = np.asarray(lo, dtype=float)
        hi_a = np.asarray(hi, dtype=float)
        shape = np.asarray(vals.shape)
        px = (hi_a - lo_a) / shape

        def inside(p):
            p = np.atleast_2d(p)
            idx = np.floor((p - lo_a) / px).astype(np.int64)
            ok = np.all((idx >= 0) & (idx < shape), axis=1)
            out = np.zeros(len(p), dtype=bool)
            out[ok] = vals[tuple(idx[ok].T)]
            return out

        return cls(tuple(lo_a), tuple(hi_a), inside, name)


@dataclass(frozen=True, eq=False)
class Grid:
    """Masked cell-centre lattice at one refinement level.

    Attributes
    ----------
    lattice : (n, d) int array
        Integer cell coordinates in lexicographic order.
    shape : tuple
        Cells per axis of the full bounding box at this level.
    """

    mask: Mask
    h: float
    lo: np.ndarray
    shape: tuple
    lattice: np.ndarray
    level: int = 0
    _index: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.lattice.shape[1]

    @property
    def mask_id(self) -> str:
        return self.mask.name

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (self.lattice + 0.5) * self.h

    def __len__(self) -> int:
        return len(self.lattice)

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Grid index of each lattice coordinate row, ``-1`` when absent."""
        coords = np.asarray(coords, dtype=np.int64)
        shape = np.asarray(self.shape)
        ok = np.all((coords >= 0) & (coords < shape), axis=-1)
        out = np.full(coords.shape[:-1], -1, dtype=np.int64)
        out[ok] = self._index[tuple(np.moveaxis(coords[ok], -1, 0))]
        return out


@dataclass(frozen=True, eq=False)
class ChildMap:
    """Correspondence between a grid and its refinement.

    ``children[offsets[i]:offsets[i+1]]`` are the fine indices of coarse cell
    ``i``.  ``adopted`` flags fine cells whose containing coarse cell is not in
    the coarse grid (a boundary effect of centre-based membership); those are
    attached to the nearest coarse cell instead.
    """

    parent_level: int
    parent: np.ndarray
    offsets: np.ndarray
    children: np.ndarray
    adopted: np.ndarray

    def of(self, i: int) -> np.ndarray:
        return self.children[self.offsets[i]:self.offsets[i + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)


def _make_grid(mask: Mask, h: float, level: int) -> Grid:
    if not h > 0:
        raise ValueError(f"spacing must be positive, got {h}")
    lo = np.asarray(mask.lo, dtype=float)
    hi = np.asarray(mask.hi, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
        raise ValueError("bounding box must be finite with hi > lo")
    shape = tuple(int(math.ceil((b - a) / h - 1e-9)) for a, b in zip(lo, hi))
    lattice = np.indices(shape).reshape(len(shape), -1).T
    keep = np.asarray(mask.contains(lo + (lattice + 0.5) * h), dtype=bool)
    lattice = np.ascontiguousarray(lattice[keep])
    if len(lattice) == 0:
        raise EmptyDomainError(f"mask {mask.name!r} contains no cell centre at h={h:g}")
    index = np.full(shape, -1, dtype=np.int64)
    index[tuple(lattice.T)] = np.arange(len(lattice))
    return Grid(mask, float(h), lo, shape, lattice, level, index)


def build_grid(mask: Mask, h: float) -> Grid:
    """All lattice cells of spacing ``h`` in the mask's box whose centre is masked."""
    return _make_grid(mask, h, 0)


def grid_with_cells(mask: Mask, n: int) -> Grid:
    """Grid with ``n`` cells along the longest side of the mask's box."""
    extent = max(b - a for a, b in zip(mask.lo, mask.hi))
    return build_grid(mask, extent / n)


def refine(grid: Grid) -> tuple[Grid, ChildMap]:
    """Halve the spacing; return the finer grid and its parent/child map.

    The fine grid is the full masked lattice at ``h/2`` so that it does not
    depend on the coarse history.
    """
    fine = _make_grid(grid.mask, grid.h / 2, grid.level + 1)
    parent = grid.lookup(fine.lattice // 2)
    adopted = parent < 0
    if np.any(adopted):
        from scipy.spatial import cKDTree

        _, near = cKDTree(grid.centers).query(fine.centers[adopted])
        parent[adopted] = near
    order = np.argsort(parent, kind="stable")
    offsets = np.zeros(len(grid) + 1, dtype=np.int64)
    np.cumsum(np.bincount(parent, minlength=len(grid)), out=offsets[1:])
    cmap = ChildMap(grid.level, parent, offsets, order.astype(np.int64), adopted)
    return fine, cmap


def stencil(dim: int, radius: int) -> np.ndarray:
    """Chebyshev ball offsets, ``(2r+1)^d`` rows, lexicographic."""
    rng = range(-radius, radius + 1)
    return np.array(list(itertools.product(rng, repeat=dim)), dtype=np.int64).reshape(-1, dim)


def neighbor_table(grid: Grid, radius: int) -> np.ndarray:
    """``(n, (2r+1)^d)`` neighbour indices, ``-1`` where the cell is absent."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    off = stencil(grid.dim, radius)
    return grid.lookup(grid.lattice[:, None, :] + off[None, :, :])


def neighbors(grid: Grid, index: int, radius: int = 1) -> np.ndarray:
    """Sorted indices within Chebyshev distance ``radius * h`` of cell ``index``."""
    if not 0 <= index < len(grid):
        raise IndexError(f"cell {index} outside grid of size {len(grid)}")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    idx = grid.lookup(grid.lattice[index] + stencil(grid.dim, radius))
    return np.sort(idx[idx >= 0])


def read_grid_file(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a ``P_GRID`` text file into ``(values, lo, hi)``.

    Header: ``P_GRID d n1 .. nd xmin1 xmax1 .. xmind xmaxd``; then the values
    in row-major order.
    """
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "P_GRID":
        raise ValueError(f"{path}: missing P_GRID header")
    d = int(tokens[1])
    shape = tuple(int(t) for t in tokens[2:2 + d])
    bounds = np.array([float(t) for t in tokens[2 + d:2 + 3 * d]]).reshape(d, 2)
    body = np.array([float(t) for t in tokens[2 + 3 * d:]])
    if body.size != math.prod(shape):
        raise ValueError(f"{path}: expected {math.prod(shape)} values, found {body.size}")
    return body.reshape(shape), bounds[:, 0], bounds[:, 1]


def write_grid_file(path, values: np.ndarray, lo, hi) -> None:
    values = np.asarray(values, dtype=float)
    head = ["P_GRID", str(values.ndim)] + [str(s) for s in values.shape]
    head += [repr(float(v)) for pair in zip(lo, hi) for v in pair]
    rows = values.reshape(-1, values.shape[-1]) if values.ndim > 1 else values[None, :]
    lines = [" ".join(head)]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def mask_from_file(path) -> Mask:
    values, lo, hi = read_grid_file(path)
    return Mask.from_raster(values, lo, hi, name=Path(path).stem)
