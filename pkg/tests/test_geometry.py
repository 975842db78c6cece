import math

import numpy as np
import pytest

from gibbsperc.geometry import (
    Ball,
    Configuration,
    GridIndex,
    Window,
    dilated_volume,
    disc_union_area,
    dist_point_set,
    unit_ball_volume,
)


def two_disc_union_area(radius, dist):
    """Closed-form union area of two equal discs (lens formula oracle)."""
    if dist >= 2 * radius:
        return 2 * math.pi * radius**2
    lens = 2 * radius**2 * math.acos(dist / (2 * radius)) - 0.5 * dist * math.sqrt(
        4 * radius**2 - dist**2
    )
    return 2 * math.pi * radius**2 - lens


class TestDist:
    def test_point_to_point_345(self):
        assert dist_point_set([0.0, 0.0], np.array([[3.0, 4.0]])) == pytest.approx(5.0)

    def test_empty_set_is_infinite(self):
        assert dist_point_set([0.0, 0.0], np.empty((0, 2))) == math.inf
        assert dist_point_set([0.0, 0.0], []) == math.inf

    def test_box_clamp(self):
        box = Window((1.0, -1.0), (2.0, 1.0))
        assert dist_point_set([0.5, 0.0], box) == pytest.approx(0.5)

    def test_mixed_union_takes_min(self):
        box = Window((1.0, -1.0), (2.0, 1.0))
        assert dist_point_set([0.5, 0.0], [box, np.array([[0.6, 0.0]])]) == pytest.approx(0.1)

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b, c = rng.normal(size=(3, 3))
            dab = dist_point_set(a, b[None, :])
            assert dab == pytest.approx(dist_point_set(b, a[None, :]))
            assert dab <= dist_point_set(a, c[None, :]) + dist_point_set(c, b[None, :]) + 1e-12


class TestUnitBallVolume:
    def test_small_dimensions(self):
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)
        # Gamma(3) = 2, so alpha_4 = pi^2 / 2
        assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2.0, rel=1e-14)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            unit_ball_volume(0)


class TestDilatedVolume:
    def test_single_point_gives_disc_area(self):
        est, se = dilated_volume([np.array([0.0, 0.0])], 1.0, 100_000, seed=1)
        assert abs(est - math.pi) < 3 * se

    def test_zero_dilation_of_box_is_its_volume(self):
        est, se = dilated_volume([Window((0.0, 0.0), (1.0, 1.0))], 0.0, 50_000, seed=2)
        assert abs(est - 1.0) < max(3 * se, 1e-9)

    def test_two_point_union_matches_lens_formula(self):
        expected = two_disc_union_area(1.0, 1.0)
        est, se = dilated_volume(
            [np.array([0.0, 0.0]), np.array([1.0, 0.0])], 1.0, 200_000, seed=3
        )
        assert abs(est - expected) < 3 * se

    def test_monotone_in_radius(self):
        shapes = [np.array([0.0, 0.0]), np.array([2.0, 1.0])]
        prev, prev_se = 0.0, 0.0
        for i, r in enumerate([0.3, 0.6, 1.0, 1.5]):
            est, se = dilated_volume(shapes, r, 60_000, seed=10 + i)
            assert est >= prev - 3 * math.hypot(se, prev_se)
            prev, prev_se = est, se

    def test_ball_dilation_closed_form(self):
        s, r = 0.7, 0.5
        est, se = dilated_volume([Ball((0.2, -0.1), s)], r, 120_000, seed=4)
        assert abs(est - math.pi * (s + r) ** 2) < 3 * se

    def test_empty_input(self):
        assert dilated_volume([], 1.0, 10, seed=0) == (0.0, 0.0)


class TestDiscUnionArea:
    def test_single_disc(self):
        assert disc_union_area([[0.0, 0.0]], 0.75) == pytest.approx(math.pi * 0.75**2)

    def test_two_discs_exact(self):
        assert disc_union_area([[0.0, 0.0], [1.0, 0.0]], 1.0) == pytest.approx(
            two_disc_union_area(1.0, 1.0), rel=1e-13
        )

    def test_disjoint_discs_add(self):
        assert disc_union_area([[0.0, 0.0], [5.0, 0.0]], 1.0) == pytest.approx(
            2 * math.pi, rel=1e-13
        )

    def test_duplicate_centres_collapse(self):
        assert disc_union_area([[0.0, 0.0], [0.0, 0.0]], 1.0) == pytest.approx(math.pi)

    def test_ring_with_hole_vs_monte_carlo(self):
        # six discs around a hole exercise the interior-boundary orientation
        angles = np.linspace(0, 2 * math.pi, 6, endpoint=False)
        centers = np.stack([1.3 * np.cos(angles), 1.3 * np.sin(angles)], axis=1)
        exact = disc_union_area(centers, 0.8)
        est, se = dilated_volume([Ball(tuple(c), 0.8) for c in centers], 0.0, 400_000, seed=5)
        assert abs(exact - est) < 3 * se

    def test_random_clusters_vs_monte_carlo(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            pts = rng.uniform(0, 2, size=(rng.integers(2, 9), 2))
            exact = disc_union_area(pts, 0.5)
            est, se = dilated_volume([Ball(tuple(p), 0.5) for p in pts], 0.0, 200_000, seed=trial)
            assert abs(exact - est) < 3 * se + 1e-12


class TestConfigurationAndWindow:
    def test_window_validation(self):
        with pytest.raises(ValueError):
            Window((0.0, 0.0), (1.0, 0.0))

    def test_volume(self):
        assert Window((0.0, 1.0), (2.0, 4.0)).volume == pytest.approx(6.0)

    def test_interior_boundary_split_is_exact(self):
        w = Window.cube(1.0, 2)
        pts = np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2]])
        cfg = Configuration(pts, w)
        assert len(cfg.interior) + len(cfg.boundary) == cfg.n
        assert np.allclose(cfg.interior, [[0.5, 0.5]])

    def test_simplicity_enforced(self):
        w = Window.cube(1.0, 2)
        with pytest.raises(ValueError):
            Configuration(np.array([[0.1, 0.1], [0.1, 0.1]]), w)

    def test_points_locked(self):
        cfg = Configuration(np.array([[0.1, 0.2]]), Window.cube(1.0, 2))
        with pytest.raises(ValueError):
            cfg.points[0, 0] = 5.0


class TestGridIndex:
    def test_neighborhood_superset_of_radius(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 10, size=(500, 2))
        grid = GridIndex(pts, cell=1.0)
        for i in range(0, 500, 37):
            hood = set(grid.neighborhood(pts[i]).tolist())
            close = np.flatnonzero(np.linalg.norm(pts - pts[i], axis=1) < 1.0)
            assert set(close.tolist()) <= hood
