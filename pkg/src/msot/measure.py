"""Discrete measures on grids and transport costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import Grid


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted Dirac masses at the cell centres of ``grid``.

    Zero-weight cells stay in the measure so indices line up with the grid;
    solvers drop them from the linear program.
    """

    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def points(self) -> np.ndarray:
        return self.grid.centers

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def active(self) -> np.ndarray:
        """Indices of cells with positive mass."""
        return np.flatnonzero(self.weights > 0)

    def __len__(self) -> int:
        return len(self.weights)


def discretize(density: Callable[[np.ndarray], np.ndarray], grid: Grid) -> DiscreteMeasure:
    """Midpoint-rule cell masses ``density(x_i) h^d``, normalised to total one."""
    vals = np.asarray(density(grid.centers), dtype=float).reshape(-1)
    if vals.shape != (len(grid),):
        raise ValueError("density must return one value per point")
    if not np.all(np.isfinite(vals)):
        raise ValueError("density returned non-finite values")
    if np.any(vals < 0):
        raise ValueError(f"density is negative at {int(np.sum(vals < 0))} cell centres")
    w = vals * grid.h ** grid.dim
    total = w.sum()
    if not total > 0:
        raise ValueError("density has zero mass on the grid")
    return DiscreteMeasure(grid, w / total)


def dirac_measure(grid: Grid, index: int) -> DiscreteMeasure:
    w = np.zeros(len(grid))
    w[index] = 1.0
    return DiscreteMeasure(grid, w)


@dataclass(frozen=True)
class CostSpec:
    """Either ``|x - y|^p`` (Euclidean norm) or an arbitrary ``func(x, y)``.

    ``func`` takes two ``(k, d)`` arrays and returns ``k`` costs.
    """

    p: Optional[float] = 2.0
    func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.func is None and not (self.p is not None and self.p > 0):
            raise ValueError("power-law cost needs p > 0")

    @classmethod
    def parse(cls, text: str) -> "CostSpec":
        """``"p=2"`` or a bare exponent ``"1.05"``."""
        key, _, val = text.partition("=")
        if not val:
            key, val = "p", key
        if key.strip() != "p":
            raise ValueError(f"unsupported cost {text!r}; use p=<exponent>")
        return cls(p=float(val))

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.func is not None:
            return np.asarray(self.func(x, y), dtype=float)
        sq = np.sum((x - y) ** 2, axis=-1)
        if self.p == 2:
            return sq
        return sq ** (self.p / 2)

    def matrix(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        if self.func is not None:
            xs = np.repeat(x, len(y), axis=0)
            ys = np.tile(y, (len(x), 1))
            return self(xs, ys).reshape(len(x), len(y))
        return self(x[:, None, :], y[None, :, :]).reshape(len(x), len(y))

    def describe(self) -> str:
        return f"p={self.p:g}" if self.func is None else "custom"


def cost_eval(spec: CostSpec, x, y) -> float:
    return float(spec(np.atleast_2d(x), np.atleast_2d(y))[0])
