import math

import numpy as np
import pytest

from gibbsperc.geometry import Window
from gibbsperc.models import (
    area_interaction,
    hard_core,
    poisson,
    strauss_hard_core,
)
from gibbsperc.sampler import (
    BirthDeathChain,
    TruncationError,
    cftp_sample,
    effective_sample_size,
    estimate_partition,
    mcmc_sample,
    sample_poisson,
)

UNIT = Window.cube(1.0, 2)


def pair_within_r(points, r):
    n = len(points)
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(points[i] - points[j]) < r:
                return True
    return False


def uniform_pair_within_r_probability(r):
    """P(|X - Y| < r) for X, Y iid uniform on the unit square (closed form)."""
    return math.pi * r**2 - 8.0 * r**3 / 3.0 + r**4 / 2.0


class TestSamplePoisson:
    def test_zero_intensity_is_empty(self):
        assert sample_poisson(0.0, UNIT, seed=1).n == 0

    def test_moments(self):
        w = Window.cube(2.0, 2)  # |window| = 4, beta = 2 -> mean = var = 8
        counts = np.array([sample_poisson(2.0, w, seed=s).n for s in range(4000)])
        se_mean = math.sqrt(8.0 / len(counts))
        assert abs(counts.mean() - 8.0) < 3 * se_mean
        var_se = math.sqrt(2 * 8.0**2 / len(counts)) + 8.0 / len(counts)
        assert abs(counts.var() - 8.0) < 4 * var_se

    def test_void_probability(self):
        n = 100_000
        rng = np.random.default_rng(3)
        counts = rng.poisson(1.0, size=n)  # count marginal of the sampler
        counts2 = np.array([sample_poisson(1.0, UNIT, seed=s).n for s in range(20_000)])
        p0 = math.exp(-1.0)
        for sample, m in ((counts, n), (counts2, len(counts2))):
            phat = np.mean(sample == 0)
            assert abs(phat - p0) < 3 * math.sqrt(p0 * (1 - p0) / m)

    def test_seed_determinism(self):
        a = sample_poisson(1.5, UNIT, seed=11)
        b = sample_poisson(1.5, UNIT, seed=11)
        assert np.array_equal(a.points, b.points)


class TestBirthDeathChain:
    def test_poisson_pmf_after_burn_in(self):
        chain = BirthDeathChain(poisson(1.0), UNIT, seed=5)
        chain.run(10_000)
        counts = chain.run_counts(100_000)
        ess = effective_sample_size(counts)
        for k in range(6):
            p = math.exp(-1.0) / math.factorial(k)
            sigma = math.sqrt(p * (1 - p) / ess)
            assert abs(np.mean(counts == k) - p) < 3 * sigma + 1e-4

    def test_hard_core_safety_every_state(self):
        chain = BirthDeathChain(hard_core(3.0, 0.3), UNIT, seed=6)
        for _ in range(3000):
            chain.step()
            assert not pair_within_r(chain.points, 0.3)

    def test_beta_to_zero_concentrates_on_empty(self):
        counts = BirthDeathChain(poisson(1e-4), UNIT, seed=7).run_counts(5000)
        assert np.mean(counts == 0) > 0.99

    def test_detailed_balance_ratio(self):
        chain = BirthDeathChain(
            strauss_hard_core(1.5, 0.2, 0.5, 0.5), UNIT, seed=8, balance_check=True
        )
        chain.run(800)
        assert chain.max_balance_dev < 1e-12

    def test_boundary_condition_repels(self):
        # a boundary point just outside the window enters the intensity
        omega = np.array([[1.05, 0.5]])
        model = hard_core(2.0, 0.5)
        cfg = mcmc_sample(model, UNIT, omega, 20_000, seed=9)
        if cfg.n:
            assert np.min(np.linalg.norm(cfg.points - omega[0], axis=1)) >= 0.5

    def test_seed_determinism(self):
        a = mcmc_sample(poisson(1.0), UNIT, None, 5000, seed=10)
        b = mcmc_sample(poisson(1.0), UNIT, None, 5000, seed=10)
        assert np.array_equal(a.points, b.points)


class TestCftp:
    def test_poisson_retained_equals_dominating(self):
        for seed in range(25):
            run = cftp_sample(poisson(1.0), UNIT, seed=seed)
            assert run.coalesced
            assert run.subset_ok()
            assert run.retained.n == run.dominating.n

    def test_hard_core_subset_and_safety(self):
        for seed in range(25):
            run = cftp_sample(hard_core(1.5, 0.4), UNIT, seed=seed)
            assert run.coalesced and run.subset_ok()
            assert not pair_within_r(run.retained.points, 0.4)

    def test_attractive_area_model_runs(self):
        run = cftp_sample(area_interaction(0.8, 1.5, 0.3), UNIT, seed=2)
        assert run.coalesced and run.subset_ok()

    def test_empty_probability_matches_partition(self):
        model = strauss_hard_core(1.5, 0.3, 0.6, 0.5)
        part = estimate_partition(model, UNIT, k_max=8, n_nodes=100_000, seed=0, tail_tol=1e-4)
        n_runs = 2000
        empties = 0
        for seed in range(n_runs):
            run = cftp_sample(model, UNIT, seed=seed)
            assert run.coalesced
            empties += run.retained.n == 0
        p0 = 1.0 / part.c_hat
        sigma = math.sqrt(p0 * (1 - p0) / n_runs + part.pmf_se()[0] ** 2)
        assert abs(empties / n_runs - p0) < 3 * sigma

    def test_seed_determinism(self):
        a = cftp_sample(hard_core(1.0, 0.3), UNIT, seed=21)
        b = cftp_sample(hard_core(1.0, 0.3), UNIT, seed=21)
        assert np.array_equal(a.retained.points, b.retained.points)
        assert np.array_equal(a.dominating.points, b.dominating.points)

    def test_mean_count_below_cstar_volume(self):
        model = hard_core(2.0, 0.3)
        counts = np.array([cftp_sample(model, UNIT, seed=s).retained.n for s in range(400)])
        bound = 2.0 * UNIT.volume  # c* |window|
        assert counts.mean() <= bound + 3 * counts.std(ddof=1) / math.sqrt(len(counts))


class TestEstimatePartition:
    def test_poisson_analytic(self):
        est = estimate_partition(poisson(1.0), UNIT, k_max=8)
        assert est.c_hat == pytest.approx(math.e, rel=1e-12)
        assert est.analytic == pytest.approx(math.e, rel=1e-12)
        pmf = est.pmf()
        assert pmf[0] == pytest.approx(math.exp(-1.0), rel=1e-12)
        assert pmf[3] == pytest.approx(math.exp(-1.0) / 6.0, rel=1e-12)

    def test_hard_core_pair_term_against_quadrature(self):
        r = 0.4
        est = estimate_partition(
            hard_core(1.0, r), UNIT, k_max=6, n_nodes=200_000, seed=1, tail_tol=1e-3
        )
        # closed form for the admissible-pair integral on the unit square
        expected_t2 = 0.5 * (1.0 - uniform_pair_within_r_probability(r))
        t2 = est.terms[1]
        assert t2.k == 2
        assert abs(t2.value - expected_t2) < 3 * t2.se
        # independent fine-grid quadrature over the displacement density
        g = 2000
        u = (np.arange(g) + 0.5) / g
        w = 1.0 - u
        inside = (u[:, None] ** 2 + u[None, :] ** 2) < r * r
        quad = 4.0 * np.sum(w[:, None] * w[None, :] * inside) / g**2
        assert quad == pytest.approx(uniform_pair_within_r_probability(r), abs=2e-4)

    def test_beta_to_zero(self):
        est = estimate_partition(hard_core(1e-4, 0.4), UNIT, k_max=3, n_nodes=20_000, seed=2)
        assert est.c_hat == pytest.approx(1.0, abs=1e-3)

    def test_truncation_error_advises(self):
        with pytest.raises(TruncationError, match="increase k_max"):
            estimate_partition(hard_core(3.0, 0.1), UNIT, k_max=2, n_nodes=5000, seed=3)


class TestSamplerAgreement:
    def test_mcmc_and_cftp_match_partition_ladder(self):
        """Tiny-window agreement: both samplers reproduce the truncated
        ladder probabilities within 3 sigma."""
        model = hard_core(2.0, 0.3)
        part = estimate_partition(model, UNIT, k_max=8, n_nodes=150_000, seed=4, tail_tol=1e-4)
        pmf = part.pmf()
        pmf_se = part.pmf_se()

        chain = BirthDeathChain(model, UNIT, seed=12)
        chain.run(10_000)
        counts = chain.run_counts(60_000)
        tau = max(1.0, len(counts) / effective_sample_size(counts))
        n_cftp = 3000
        cftp_counts = np.array(
            [cftp_sample(model, UNIT, seed=1000 + s).retained.n for s in range(n_cftp)]
        )
        for k in range(6):
            p = pmf[k]
            sig_mcmc = math.sqrt(max(p * (1 - p), 1e-12) * tau / len(counts) + pmf_se[k] ** 2)
            sig_cftp = math.sqrt(max(p * (1 - p), 1e-12) / n_cftp + pmf_se[k] ** 2)
            assert abs(np.mean(counts == k) - p) < 3 * sig_mcmc + 1e-4
            assert abs(np.mean(cftp_counts == k) - p) < 3 * sig_cftp + 1e-4
