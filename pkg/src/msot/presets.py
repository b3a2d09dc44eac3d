"""Named test densities: masks plus (unnormalised) density functions.

Every density is a vectorised function of an ``(k, d)`` point array.  Uniform
presets return the indicator of their mask.  A preset is addressed by a
string ``name`` or ``name:key=value,key=value``.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .grid import Mask, read_grid_file


class Density(NamedTuple):
    mask: Mask
    density: Callable[[np.ndarray], np.ndarray]


def _uniform(mask: Mask) -> Density:
    return Density(mask, lambda p: mask.contains(np.atleast_2d(p)).astype(float))


def _region(lo, hi, name, test) -> Mask:
    def contains(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.asarray(test(p[:, 0], p[:, 1]), dtype=bool)

    return Mask(tuple(map(float, lo)), tuple(map(float, hi)), contains, name)


# ex33: oscillatory source density between two squares

def q(z):
    z = np.asarray(z, dtype=float)
    pi = math.pi
    return ((-z ** 2 / (8 * pi) + 1 / (256 * pi ** 3) + 1 / (32 * pi)) * np.cos(8 * pi * z)
            + z * np.sin(8 * pi * z) / (32 * pi ** 2))


def dq(z):
    z = np.asarray(z, dtype=float)
    return (z ** 2 - 0.25) * np.sin(8 * math.pi * z)


def d2q(z):
    z = np.asarray(z, dtype=float)
    w = 8 * math.pi
    return 2 * z * np.sin(w * z) + w * (z ** 2 - 0.25) * np.cos(w * z)


def ex33_density(p):
    p = np.atleast_2d(p)
    x, y = p[:, 0], p[:, 1]
    return (1 + 4 * (d2q(x) * q(y) + q(x) * d2q(y))
            + 16 * (q(x) * q(y) * d2q(x) * d2q(y) - dq(x) ** 2 * dq(y) ** 2))


def striped_density(p):
    p = np.atleast_2d(p)
    ax, ay = np.abs(p[:, 0]), np.abs(p[:, 1])
    in_r = (ax <= 1) & (ay <= 0.5)
    return (in_r.astype(float)
            + ((ax >= 0.75) & (ay <= 0.5) & in_r)
            + ((ax >= 0.75) & (ay <= 0.25) & in_r))


def _square(x0=0.0, y0=0.0, side=1.0):
    return _uniform(Mask.box([x0, y0], [x0 + side, y0 + side], "uniform_square"))


def _interval(a=0.0, b=1.0):
    return _uniform(Mask.box([a], [b], "interval"))


def _diamond(cx=0.5, cy=0.5, r=0.5):
    return _uniform(_region([cx - r, cy - r], [cx + r, cy + r], "uniform_diamond",
                            lambda x, y: np.abs(x - cx) + np.abs(y - cy) <= r))


def _disc(cx=0.0, cy=0.0, r=1.0):
    return _uniform(_region([cx - r, cy - r], [cx + r, cy + r], "disc",
                            lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 <= r * r))


def _pacman(r=1.0, mouth=math.pi / 2):
    def test(x, y):
        return (x * x + y * y <= r * r) & (np.abs(np.arctan2(y, x)) >= mouth / 2)

    return _uniform(_region([-r, -r], [r, r], "pacman", test))


def _frame(inner=0.4, corner=0.3):
    def test(x, y):
        ax, ay = np.abs(x), np.abs(y)
        hole = (ax < inner) & (ay < inner)
        notch = (ax > 1 - corner) & (ay > 1 - corner)
        return (ax <= 1) & (ay <= 1) & ~hole & ~notch

    return _uniform(_region([-1, -1], [1, 1], "nonconvex_frame", test))


def _superellipse_ring(power=0.8, hole=9 / 25):
    def test(x, y):
        ax, ay = np.abs(x), np.abs(y)
        return (ax ** power + ay ** power <= 1) & (ax + ay > hole)

    return _uniform(_region([-1, -1], [1, 1], "superellipse_ring", test))


def _superellipse_85(power=1.6):
    return _uniform(_region([-1, -1], [1, 1], "superellipse_85",
                            lambda x, y: np.abs(x) ** power + np.abs(y) ** power <= 1))


def _ex33():
    box = Mask.box([-0.5, -0.5], [0.5, 0.5], "ex33_source")
    return Density(box, lambda p: ex33_density(p) * box.contains(p))


def _split_circle(part="source", r=1.0, shift=0.5):
    if part == "source":
        return _uniform(_region([-r, -r], [r, r], "split_circle",
                                lambda x, y: x * x + y * y <= r * r))

    def test(x, y):
        right = (x >= shift) & ((x - shift) ** 2 + y * y <= r * r)
        left = (x <= -shift) & ((x + shift) ** 2 + y * y <= r * r)
        return right | left

    return _uniform(_region([-r - shift, -r], [r + shift, r], "split_circle_target", test))


def _striped():
    box = Mask.box([-1, -0.5], [1, 0.5], "striped_rectangle")
    return Density(box, striped_density)


def _annulus_sector(k=0, r_in=0.5, r_out=1.0, width=math.pi / 3, phase=math.pi / 2):
    centre = phase + 2 * math.pi * int(k) / 3

    def test(x, y):
        rr = x * x + y * y
        dtheta = np.angle(np.exp(1j * (np.arctan2(y, x) - centre)))
        return (rr >= r_in ** 2) & (rr <= r_out ** 2) & (np.abs(dtheta) <= width / 2)

    return _uniform(_region([-r_out, -r_out], [r_out, r_out], f"annulus_sector{int(k)}", test))


def _parabola_lens(dir="up", gap=0.2, top=1.0):
    sign = 1.0 if dir == "up" else -1.0
    if dir not in ("up", "down"):
        raise ValueError("parabola_lens dir must be 'up' or 'down'")

    def test(x, y):
        s = sign * y
        return (s >= x * x + gap / 2) & (s <= top)

    half = math.sqrt(max(top - gap / 2, 0.0))
    lo = [-half, gap / 2] if sign > 0 else [-half, -top]
    hi = [half, top] if sign > 0 else [half, -gap / 2]
    return _uniform(_region(lo, hi, f"parabola_{dir}", test))


def _random_field(seed=0, cells=4, dim=2, lo=0.2):
    """Piecewise-constant density on the unit box with values in ``[lo, 1]``."""
    dim, cells = int(dim), int(cells)
    rng = np.random.default_rng(int(seed))
    table = lo + (1 - lo) * rng.random((cells,) * dim)
    box = Mask.box([0.0] * dim, [1.0] * dim, "random_field")

    def density(p):
        p = np.atleast_2d(p)
        idx = np.clip(np.floor(p * cells).astype(np.int64), 0, cells - 1)
        return table[tuple(idx.T)] * box.contains(p)

    return Density(box, density)


PRESETS = {
    "uniform_square": _square,
    "interval": _interval,
    "uniform_diamond": _diamond,
    "disc": _disc,
    "pacman": _pacman,
    "nonconvex_frame": _frame,
    "superellipse_ring": _superellipse_ring,
    "ex33_source": _ex33,
    "split_circle": _split_circle,
    "striped_rectangle": _striped,
    "superellipse_85": _superellipse_85,
    "annulus_sector": _annulus_sector,
    "parabola_lens": _parabola_lens,
    "random_field": _random_field,
}


def _coerce(value: str):
    try:
        return float(value)
    except ValueError:
        return value


def parse_preset(text: str) -> tuple[str, dict]:
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"malformed preset parameter {item!r} in {text!r}")
        params[key.strip()] = _coerce(val.strip())
    return name.strip(), params


def preset_density(preset: str, **params) -> Density:
    """Mask and density of a named preset; ``preset`` may carry ``:k=v`` params."""
    name, parsed = parse_preset(preset)
    parsed.update(params)
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**parsed)


def raster_density(path) -> Density:
    """Density read from a ``P_GRID`` file; support is where values are positive."""
    values, lo, hi = read_grid_file(path)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: density values must be finite and nonnegative")
    mask = Mask.from_raster(values > 0, lo, hi, name=str(path))
    px = (hi - lo) / np.asarray(values.shape)

    def density(p):
        p = np.atleast_2d(p)
        idx = np.floor((p - lo) / px).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < values.shape), axis=1)
        out = np.zeros(len(p))
        out[ok] = values[tuple(idx[ok].T)]
        return out

    return Density(mask, density)


def load_density(spec: str) -> Density:
    """A preset string, or a path to a ``P_GRID`` density file."""
    from pathlib import Path

    if Path(spec).is_file():
        return raster_density(spec)
    return preset_density(spec)
