import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msot.errors import EmptyDomainError
from msot.grid import (Mask, build_grid, mask_from_file, neighbors, read_grid_file, refine,
                       write_grid_file)
from msot.presets import preset_density

from oracles import scan_count


def unit_box(d=2):
    return Mask.box([0.0] * d, [1.0] * d)


def test_full_box_half_spacing_has_four_centres():
    g = build_grid(unit_box(), 0.5)
    assert sorted(map(tuple, g.centers)) == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25),
                                             (0.75, 0.75)]
    assert g.level == 0 and g.h == 0.5


def test_unit_diameter_disc_with_unit_spacing_has_origin_only():
    disc = preset_density("disc:r=0.5").mask
    g = build_grid(disc, 1.0)
    np.testing.assert_array_equal(g.centers, [[0.0, 0.0]])


def test_pacman_grid_matches_point_scan():
    mask = preset_density("pacman").mask
    h = 2.0 / 64
    assert len(build_grid(mask, h)) == scan_count(mask, h)


def test_empty_mask_raises():
    far = Mask.box([0, 0], [1, 1])
    empty = Mask(far.lo, far.hi, lambda p: np.zeros(len(np.atleast_2d(p)), bool), "empty")
    with pytest.raises(EmptyDomainError):
        build_grid(empty, 0.25)


def test_nonpositive_spacing_rejected():
    with pytest.raises(ValueError):
        build_grid(unit_box(), 0.0)


def test_refine_interval_cell():
    g = build_grid(unit_box(1), 1.0)
    fine, cmap = refine(g)
    np.testing.assert_allclose(fine.centers[:, 0], [0.25, 0.75])
    np.testing.assert_array_equal(cmap.of(0), [0, 1])
    assert fine.h == 0.5 and fine.level == 1


def test_refine_full_square_gives_four_children_each():
    g = build_grid(unit_box(), 0.5)
    fine, cmap = refine(g)
    assert len(fine) == 16
    assert np.all(cmap.counts() == 4)


def test_refine_pacman_matches_scan():
    mask = preset_density("pacman").mask
    g = build_grid(mask, 2.0 / 32)
    fine, cmap = refine(g)
    assert len(fine) == scan_count(mask, 1.0 / 32)
    assert cmap.counts().sum() == len(fine)


def test_children_lie_in_parent_cell():
    mask = preset_density("nonconvex_frame").mask
    g = build_grid(mask, 0.125)
    fine, cmap = refine(g)
    inside = np.all(np.abs(fine.centers - g.centers[cmap.parent]) <= g.h / 2 + 1e-12, axis=1)
    # cells adopted by a neighbouring parent are the only exception
    assert np.all(inside | cmap.adopted)
    assert cmap.counts().max() <= 4


def test_neighbors_interior_and_corner():
    g = build_grid(unit_box(), 0.25)
    interior = int(g.lookup(np.array([1, 1])))
    corner = int(g.lookup(np.array([0, 0])))
    assert len(neighbors(g, interior, 1)) == 9
    assert len(neighbors(g, corner, 1)) == 4
    np.testing.assert_array_equal(neighbors(g, interior, 0), [interior])


def test_neighbors_radius_two_covers_five_by_five():
    g = build_grid(unit_box(), 0.2)
    centre = int(g.lookup(np.array([2, 2])))
    assert len(neighbors(g, centre, 2)) == 25


def test_neighbors_invalid_index():
    g = build_grid(unit_box(), 0.5)
    with pytest.raises(IndexError):
        neighbors(g, 4, 1)


@settings(max_examples=30, deadline=None)
@given(preset=st.sampled_from(["pacman", "disc", "nonconvex_frame", "superellipse_ring",
                               "uniform_diamond", "split_circle"]),
       n=st.integers(4, 24))
def test_refine_then_parent_is_identity_and_volumes_add(preset, n):
    mask = preset_density(preset).mask
    extent = max(b - a for a, b in zip(mask.lo, mask.hi))
    g = build_grid(mask, extent / n)
    fine, cmap = refine(g)
    parents = np.empty(len(fine), dtype=np.int64)
    for i in range(len(g)):
        parents[cmap.of(i)] = i
    np.testing.assert_array_equal(parents, cmap.parent)
    assert math.isclose(2 ** g.dim * (g.h / 2) ** g.dim, g.h ** g.dim)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), r=st.integers(0, 3), seed=st.integers(0, 10 ** 6))
def test_neighbors_symmetric(n, r, seed):
    g = build_grid(preset_density("pacman").mask, 2.0 / n)
    rng = np.random.default_rng(seed)
    i = int(rng.integers(len(g)))
    for j in neighbors(g, i, r):
        assert i in neighbors(g, int(j), r)


def test_build_grid_deterministic_and_lexicographic():
    mask = preset_density("superellipse_ring").mask
    a, b = build_grid(mask, 0.05), build_grid(mask, 0.05)
    np.testing.assert_array_equal(a.centers, b.centers)
    lat = a.lattice
    assert all(tuple(lat[k]) < tuple(lat[k + 1]) for k in range(len(lat) - 1))


def test_grid_file_roundtrip_and_raster_mask(tmp_path):
    vals = np.zeros((4, 4))
    vals[1:3, 1:3] = 1
    path = tmp_path / "m.grid"
    write_grid_file(path, vals, [0, 0], [1, 1])
    back, lo, hi = read_grid_file(path)
    np.testing.assert_array_equal(back, vals)
    mask = mask_from_file(path)
    g = build_grid(mask, 0.25)
    assert len(g) == 4
    g2 = build_grid(mask, 0.125)
    assert len(g2) == 16


def test_grid_file_bad_header(tmp_path):
    p = tmp_path / "bad.grid"
    p.write_text("GRID 1 2 0 1\n0 1\n")
    with pytest.raises(ValueError):
        read_grid_file(p)
