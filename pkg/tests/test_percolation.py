import math

import numpy as np
import pytest

from gibbsperc.geometry import Configuration, Window
from gibbsperc.models import hard_core, poisson
from gibbsperc.percolation import (
    BooleanModel,
    BracketError,
    brute_force_labels,
    crossing,
    estimate_beta_c,
    label_clusters,
    perc_probability,
    poisson_coupled_fractions,
    slice_crossing,
    wilson_ci,
)


def partition_sets(labels):
    groups = {}
    for idx, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(idx)
    return frozenset(frozenset(g) for g in groups.values())


class TestLabelClusters:
    def test_open_ball_overlap_strict(self):
        w = Window.cube(8.0, 2)
        close = Configuration(np.array([[3.0, 3.0], [3.0, 4.9]]), w)
        apart = Configuration(np.array([[3.0, 3.0], [3.0, 5.0]]), w)
        assert label_clusters(BooleanModel(close, 1.0)).n_clusters == 1
        assert label_clusters(BooleanModel(apart, 1.0)).n_clusters == 2

    def test_huge_radius_single_cluster(self):
        rng = np.random.default_rng(1)
        w = Window.cube(4.0, 2)
        cfg = Configuration(rng.uniform(0, 4, (40, 2)), w)
        assert label_clusters(BooleanModel(cfg, 10.0)).n_clusters == 1

    def test_matches_brute_force_partition(self):
        rng = np.random.default_rng(2)
        for trial in range(25):
            n = int(rng.integers(1, 200))
            w = Window.cube(6.0, 2)
            cfg = Configuration(rng.uniform(0, 6, (n, 2)), w)
            bm = BooleanModel(cfg, 0.45)
            fast = label_clusters(bm).labels
            slow = brute_force_labels(bm)
            assert partition_sets(fast) == partition_sets(slow)

    def test_union_find_accounting_identity(self):
        rng = np.random.default_rng(3)
        w = Window.cube(5.0, 2)
        cfg = Configuration(rng.uniform(0, 5, (120, 2)), w)
        labels = label_clusters(BooleanModel(cfg, 0.4))
        assert labels.n_clusters + labels.merges == cfg.n

    def test_three_dimensional(self):
        w = Window.cube(4.0, 3)
        pts = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 2.2], [3.5, 3.5, 3.5]])
        labels = label_clusters(BooleanModel(Configuration(pts, w), 0.7))
        assert labels.n_clusters == 2


class TestCrossing:
    def test_single_midpoint_no_crossing(self):
        w = Window.cube(4.0, 2)
        cfg = Configuration(np.array([[2.0, 2.0]]), w)
        assert not crossing(BooleanModel(cfg, 0.5))

    def test_chain_of_points_crosses(self):
        w = Window.cube(4.0, 2)
        xs = np.arange(0.2, 4.0, 0.6)
        pts = np.stack([xs, np.full_like(xs, 2.0)], axis=1)
        assert crossing(BooleanModel(Configuration(pts, w), 0.5), axis=0)

    def test_empty_configuration(self):
        w = Window.cube(4.0, 2)
        assert not crossing(BooleanModel(Configuration.empty(w), 1.0))

    def test_monotone_under_adding_points(self):
        rng = np.random.default_rng(4)
        w = Window.cube(6.0, 2)
        for _ in range(20):
            pts = rng.uniform(0, 6, (30, 2))
            cfg = Configuration(pts, w)
            if crossing(BooleanModel(cfg, 0.8)):
                extra = rng.uniform(0, 6, (5, 2))
                bigger = Configuration(np.vstack([pts, extra]), w)
                assert crossing(BooleanModel(bigger, 0.8))


class TestPercProbability:
    def test_low_beta_never_crosses(self):
        frac, _ = perc_probability(poisson(0.01), R=0.5, L=8, n_reps=50, seed=1)
        assert frac == 0.0

    def test_dense_regime_always_crosses(self):
        # beta = 10 / (alpha_2 R^2)
        beta = 10.0 / (math.pi * 0.25)
        frac, _ = perc_probability(poisson(beta), R=0.5, L=8, n_reps=50, seed=2)
        assert frac == 1.0

    def test_small_window_warns(self):
        with pytest.warns(UserWarning, match="recommended"):
            perc_probability(poisson(0.1), R=1.0, L=2, n_reps=2, seed=3)

    def test_mcmc_agrees_with_exact_poisson(self):
        beta, R, L, n = 1.4, 0.5, 5.0, 120
        f_exact, _ = perc_probability(poisson(beta), R, L, n, sampler="exact", seed=4)
        f_mcmc, _ = perc_probability(
            poisson(beta), R, L, n, sampler="mcmc", seed=5, mcmc_steps=20_000
        )
        sigma = math.sqrt(2 * 0.25 / n)
        assert abs(f_exact - f_mcmc) < 3 * sigma

    def test_unknown_sampler_rejected(self):
        with pytest.raises(ValueError, match="sampler"):
            perc_probability(poisson(1.0), 0.5, 8, 2, sampler="bogus", seed=0)

    def test_exact_sampler_requires_poisson(self):
        with pytest.raises(ValueError, match="Poisson"):
            perc_probability(hard_core(1.0, 0.2), 0.5, 8, 2, sampler="exact", seed=0)


class TestCoupledThinning:
    def test_per_replication_monotone_indicators(self):
        fracs, ind = poisson_coupled_fractions(
            [0.5, 1.0, 1.5, 2.0], R=0.5, L=10, n_reps=40, seed=6, return_indicators=True
        )
        assert np.all(np.diff(ind.astype(int), axis=1) >= 0)
        assert np.all(np.diff(fracs) >= 0)


class TestEstimateBetaC:
    def test_poisson_threshold_sane(self):
        est = estimate_beta_c(poisson, R=0.5, L_list=[10], tol=0.2, seed=7, n_reps=80)
        # eta_c = beta_c * pi R^2 is about 1.128 in the infinite volume limit
        assert 0.8 < est.estimate < 2.4

    def test_flat_curve_raises_bracket_error(self):
        # hard core at r = 2.5 R: balls never overlap, crossing impossible
        with pytest.raises(BracketError):
            estimate_beta_c(
                lambda b: hard_core(b, 1.25),
                R=0.5,
                L_list=[6],
                tol=0.2,
                seed=8,
                n_reps=30,
                sampler="mcmc",
                mcmc_steps=3000,
            )


class TestWilsonCI:
    def test_contains_point_estimate(self):
        lo, hi = wilson_ci(30, 100)
        assert lo < 0.3 < hi

    def test_edge_cases(self):
        lo, hi = wilson_ci(0, 50)
        assert lo == pytest.approx(0.0, abs=1e-9)
        lo, hi = wilson_ci(50, 50)
        assert hi == pytest.approx(1.0, abs=1e-9)


class TestSliceDiagnostic:
    def test_crossing_slab_detected(self):
        w = Window.cube(4.0, 3)
        xs = np.arange(0.2, 4.0, 0.5)
        pts = np.stack([xs, np.full_like(xs, 2.0), np.full_like(xs, 0.1)], axis=1)
        cfg = Configuration(pts, w)
        assert slice_crossing(cfg, R=0.6, axes=(0, 1), offset=0.0)

    def test_out_of_plane_points_ignored(self):
        w = Window.cube(4.0, 3)
        pts = np.array([[2.0, 2.0, 3.0]])
        cfg = Configuration(pts, w)
        assert not slice_crossing(cfg, R=0.6, axes=(0, 1), offset=0.0)

    def test_d2_rejected(self):
        cfg = Configuration(np.array([[1.0, 1.0]]), Window.cube(4.0, 2))
        with pytest.raises(ValueError):
            slice_crossing(cfg, R=0.5)
