import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msot.errors import TransportError
from msot.grid import Mask, build_grid
from msot.lp_core import Plan, solve_full
from msot.measure import CostSpec, DiscreteMeasure, discretize
from msot.multiscale import MultiscaleConfig, multiscale_solve
from msot.postprocess import (PointCloud, TransportMap, analytic_map, barycentric_project,
                              error_metrics, ex33_map, measure_cloud, pushforward, read_map,
                              smooth, split_circle_map, write_map, write_pgm, write_raster)
from msot.presets import preset_density

from oracles import dq_ref, q_ref


def line(points, weights=None):
    pts = np.asarray(points, float)
    h = 1.0
    g = build_grid(Mask.box([pts.min() - h / 2], [pts.max() + h / 2]), h)
    w = np.zeros(len(g))
    idx = g.lookup(np.rint((pts[:, None] - g.lo) / h - 0.5).astype(np.int64))
    w[idx] = 1.0 / len(pts) if weights is None else weights
    return DiscreteMeasure(g, w), idx


def permutation_plan(n, perm):
    rows = np.arange(n)
    order = np.argsort(rows * n + perm)
    return Plan(rows[order], np.asarray(perm)[order], np.full(n, 1.0 / n), 0.0, None, None,
                n, n)


def test_permutation_plan_projects_to_targets():
    g = build_grid(Mask.box([0, 0], [1, 1]), 0.5)
    mu = discretize(lambda p: np.ones(len(p)), g)
    perm = np.array([2, 0, 3, 1])
    tmap = barycentric_project(permutation_plan(4, perm), mu, g)
    np.testing.assert_array_equal(tmap.target, g.centers[perm])
    # a second pass over the same permutation changes nothing
    again = barycentric_project(permutation_plan(4, perm), mu, g)
    np.testing.assert_array_equal(again.target, tmap.target)


def test_split_dirac_projects_to_midpoint():
    mu, src = line([0.0], [1.0])
    nu_grid = build_grid(Mask.box([-1.5], [1.5]), 1.0)
    plan = Plan(np.array([0, 0]), np.array([0, 2]), np.array([0.5, 0.5]), 1.0, None, None,
                1, 3)
    tmap = barycentric_project(plan, mu, nu_grid)
    np.testing.assert_allclose(tmap.target, [[0.0]])


def test_missing_row_is_an_error():
    g = build_grid(Mask.box([0], [2]), 1.0)
    mu = DiscreteMeasure(g, np.array([0.5, 0.5]))
    plan = Plan(np.array([0]), np.array([0]), np.array([1.0]), 0.0, None, None, 2, 2)
    with pytest.raises(TransportError):
        barycentric_project(plan, mu, g)


def _square_diamond(n=32):
    cfg = MultiscaleConfig(coarse_n=16, levels=max(0, int(np.log2(n // 16))))
    return multiscale_solve(preset_density("uniform_square"), preset_density("uniform_diamond"),
                            CostSpec(2), cfg)


def test_jensen_on_square_diamond():
    plan, mu, nu, _ = _square_diamond(32)
    tmap = barycentric_project(plan, mu, nu.grid)
    assert float(tmap.mass @ np.sum((tmap.points - tmap.target) ** 2, axis=1)) <= plan.objective
    assert tmap.total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p", [1.05, 2.0, 3.0, 6.0])
def test_jensen_projection_inequality(p):
    src, dst = preset_density("random_field:seed=4"), preset_density("disc:cx=0.5,cy=0.5,r=0.5")
    g1 = build_grid(src.mask, 1 / 12)
    g2 = build_grid(dst.mask, 1 / 12)
    mu, nu = discretize(src.density, g1), discretize(dst.density, g2)
    cost = CostSpec(p)
    plan = solve_full(mu, nu, cost)
    tmap = barycentric_project(plan, mu, g2)
    lhs = float(tmap.mass @ cost(tmap.points, tmap.target))
    assert lhs <= plan.objective * (1 + 1e-12)


def test_pushforward_identity_and_permutation():
    g = build_grid(Mask.box([0, 0], [1, 1]), 0.5)
    mu = discretize(lambda p: np.ones(len(p)), g)
    ident = barycentric_project(permutation_plan(4, np.arange(4)), mu, g)
    cloud = pushforward(ident)
    np.testing.assert_array_equal(cloud.points, mu.points)
    perm = barycentric_project(permutation_plan(4, np.array([1, 2, 3, 0])), mu, g)
    cloud = pushforward(perm)
    np.testing.assert_array_equal(np.sort(cloud.points, axis=0), np.sort(g.centers, axis=0))
    assert cloud.total == pytest.approx(1.0, abs=1e-15)


def test_split_circle_pushforward_avoids_the_gap():
    cfg = MultiscaleConfig(coarse_n=16, levels=2)
    plan, mu, nu, _ = multiscale_solve(preset_density("split_circle"),
                                       preset_density("split_circle:part=target"),
                                       CostSpec(2), cfg)
    cloud = pushforward(barycentric_project(plan, mu, nu.grid))
    in_gap = np.abs(cloud.points[:, 0]) < 0.4
    assert float(cloud.weights[in_gap].sum()) < 0.02


def test_smooth_single_dirac_peaks_at_centre():
    r = smooth(PointCloud(np.array([[0.5, 0.5]]) + 1 / 42, [1.0]), 0.05, (21, 21), [0, 0],
               [1, 1])
    assert np.unravel_index(np.argmax(r.values), r.values.shape) == (11, 11)
    assert r.integral() == pytest.approx(1.0, abs=1e-12)


def test_smooth_far_diracs_split_mass_evenly():
    sigma = 0.02
    cloud = PointCloud(np.array([[0.2, 0.5], [0.8, 0.5]]), [0.5, 0.5])
    r = smooth(cloud, sigma, (100, 100), [0, 0], [1, 1])
    left = r.values[:50].sum() * r.pixel_volume
    right = r.values[50:].sum() * r.pixel_volume
    assert abs(left - 0.5) <= 1e-6 and abs(right - 0.5) <= 1e-6


def test_smooth_uniform_square_is_flat_inside():
    h = 1 / 64
    g = build_grid(Mask.box([0, 0], [1, 1]), h)
    cloud = measure_cloud(discretize(lambda p: np.ones(len(p)), g))
    r = smooth(cloud, 6 * h, (64, 64), [0, 0], [1, 1])
    inner = r.values[26:38, 26:38]
    assert inner.max() / inner.min() - 1 <= 0.01


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), alpha=st.floats(0.1, 5), beta=st.floats(0.1, 5),
       sigma=st.floats(0.01, 0.2))
def test_smoothing_is_linear(seed, alpha, beta, sigma):
    rng = np.random.default_rng(seed)
    pts = rng.random((6, 2))
    wa, wb = rng.random(6), rng.random(6)
    args = (sigma, (30, 30), [0, 0], [1, 1])
    a = smooth(PointCloud(pts, wa), *args, normalize=False).values
    b = smooth(PointCloud(pts, wb), *args, normalize=False).values
    ab = smooth(PointCloud(pts, alpha * wa + beta * wb), *args, normalize=False).values
    np.testing.assert_allclose(ab, alpha * a + beta * b, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), sigma=st.floats(0.005, 0.5), n=st.integers(1, 40))
def test_smoothing_conserves_mass(seed, sigma, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 1.2, (n, 2))
    w = rng.random(n)
    w /= w.sum()
    r = smooth(PointCloud(pts, w), sigma, (25, 35), [0, 0], [1, 1.4], normalize=False)
    assert abs(r.integral() - 1.0) <= 1e-6


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_projection_conserves_mass(seed):
    src = preset_density(f"random_field:seed={seed}")
    dst = preset_density(f"random_field:seed={seed + 7}")
    g = build_grid(src.mask, 1 / 8)
    mu, nu = discretize(src.density, g), discretize(dst.density, g)
    tmap = barycentric_project(solve_full(mu, nu), mu, g)
    assert abs(tmap.total - 1.0) <= 1e-6
    np.testing.assert_allclose(tmap.mass, mu.weights[mu.active()])
    assert abs(pushforward(tmap).total - 1.0) <= 1e-6


def test_analytic_maps():
    np.testing.assert_allclose(analytic_map("ex33", [0.125, 0.25]), [0.125, 0.25],
                               atol=1e-15)
    np.testing.assert_allclose(analytic_map("split_circle", [0.3, -0.2]), [0.8, -0.2])
    np.testing.assert_allclose(analytic_map("split_circle", [-0.3, 0.1]), [-0.8, 0.1])
    np.testing.assert_allclose(analytic_map("split_circle", [0.0, 0.1]), [0.0, 0.1])
    rng = np.random.default_rng(9)
    pts = rng.uniform(-0.5, 0.5, (5, 2))
    ref = np.column_stack([pts[:, 0] + 4 * dq_ref(pts[:, 0]) * q_ref(pts[:, 1]),
                           pts[:, 1] + 4 * q_ref(pts[:, 0]) * dq_ref(pts[:, 1])])
    np.testing.assert_allclose(ex33_map(pts), ref, atol=1e-9)
    with pytest.raises(ValueError):
        analytic_map("pacman", [0, 0])


def test_error_metrics_examples():
    pts = np.array([[0.1, 0.2]])
    exact = TransportMap(np.array([0]), pts, np.array([1.0]), split_circle_map(pts))
    assert error_metrics(exact, split_circle_map) == (0.0, 0.0)
    off = TransportMap(np.array([0]), pts, np.array([1.0]), split_circle_map(pts) + [0.01, 0])
    mx, l2 = error_metrics(off, split_circle_map)
    assert mx == pytest.approx(0.01, abs=1e-15) and l2 == pytest.approx(0.01, abs=1e-15)


def test_writers(tmp_path):
    pts = np.array([[0.25, 0.5], [0.75, 0.5]])
    tmap = TransportMap(np.array([0, 1]), pts, np.array([0.5, 0.5]), pts + 0.125)
    write_map(tmp_path / "map.txt", tmap)
    row = (tmp_path / "map.txt").read_text().splitlines()[0].split()
    assert len(row) == 5
    back = read_map(tmp_path / "map.txt")
    np.testing.assert_array_equal(back.target, tmap.target)
    r = smooth(pushforward(tmap), 0.1, (8, 6), [0, 0], [1, 1])
    write_raster(tmp_path / "d.grid", r)
    assert (tmp_path / "d.grid").read_text().startswith("P_GRID 2 8 6")
    write_pgm(tmp_path / "d.pgm", r)
    data = (tmp_path / "d.pgm").read_bytes()
    assert data.startswith(b"P5\n8 6\n255\n") and len(data) == len(b"P5\n8 6\n255\n") + 48
