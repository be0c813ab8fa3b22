"""Simulation designs, dataset generation, and the three studies."""

import numpy as np
import pytest

import chemgp as cg
from chemgp.errors import ConfigError, DataError
from chemgp.link import LinkSpec, interval_prob
from chemgp.simstudy import design_space, render_boxplot_svg


class TestDesign:
    def test_full_space_enumerates_nonzero_fingerprints(self):
        design = cg.SimDesign(kappa=5, m="all")
        space = design_space(design, np.random.default_rng(0))
        assert space.m == 31
        assert sorted(fp.packed for fp in space.compounds) == list(range(1, 32))

    def test_subsampled_space(self):
        design = cg.SimDesign(kappa=10, m=90)
        space = design_space(design, np.random.default_rng(0))
        assert space.m == 90
        assert len({fp.packed for fp in space.compounds}) == 90

    def test_covariate_grid(self):
        design = cg.SimDesign(n_per_compound=11)
        np.testing.assert_allclose(design.grid, np.arange(11) / 10)

    def test_validation(self):
        with pytest.raises(ConfigError):
            cg.SimDesign(kappa=3, m=20)
        with pytest.raises(ConfigError):
            cg.SimDesign(C=4, alphas=(-1.0, 0.0))


class TestSimulateDataset:
    def test_deterministic_under_seed(self):
        design = cg.SimDesign(kappa=4, n_per_compound=5)
        space = design_space(design, np.random.default_rng(1))
        a, ua = cg.simulate_dataset(design, np.random.default_rng(42), space)
        b, ub = cg.simulate_dataset(design, np.random.default_rng(42), space)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(ua, ub)

    def test_shapes(self):
        design = cg.SimDesign(kappa=5, n_per_compound=11)
        data, u = cg.simulate_dataset(design, np.random.default_rng(0))
        assert data.n == 31 * 11
        assert data.p == 1
        assert len(u) == 31
        assert set(np.unique(data.compound_index)) == set(range(31))

    def test_zero_variance_matches_analytic_class_frequencies(self):
        # with sigma2 ~ 0 the latent effects vanish and class draws follow
        # the plain cumulative-link probabilities; binomial 3-sigma check
        # constant covariate grid so every row shares the same probabilities
        design = cg.SimDesign(
            kappa=2, m="all", C=3, alphas=(-0.7, 0.6), beta=0.0,
            sigma2=1e-12, n_per_compound=3, x_grid=tuple([0.0] * 33334),
        )
        data, u = cg.simulate_dataset(design, np.random.default_rng(7))
        np.testing.assert_allclose(u, 0.0, atol=1e-5)
        link = LinkSpec("logit")
        ae = np.array([-np.inf, -0.7, 0.6, np.inf])
        n = data.n
        for j in (1, 2, 3):
            p = float(interval_prob(link, ae[j], ae[j - 1]))
            freq = np.mean(data.y == j)
            se = np.sqrt(p * (1 - p) / n)
            assert abs(freq - p) < 3 * se, (j, freq, p)

    def test_latent_covariance_converges_to_kernel(self):
        # empirical covariance of the simulated effects approaches K
        design = cg.SimDesign(kappa=3, m="all", sigma2=0.8, phi=0.6)
        space = design_space(design, np.random.default_rng(2))
        K = cg.covariance_matrix(design.true_params.kernel, space).matrix
        rng = np.random.default_rng(5)
        reps = 10_000
        draws = np.empty((reps, space.m))
        for r in range(reps):
            _, u = cg.simulate_dataset(
                cg.SimDesign(kappa=3, m="all", sigma2=0.8, phi=0.6, n_per_compound=1),
                rng, space,
            )
            draws[r] = u
        emp = np.cov(draws.T)
        # SE of a covariance entry is roughly sqrt((Kii Kjj + Kij^2)/reps)
        se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K**2) / reps)
        assert np.all(np.abs(emp - K) < 3.5 * se)


class TestStudies:
    def test_zero_replications_gives_empty_report(self):
        design = cg.SimDesign(kappa=3, replications=0)
        report = cg.study_estimation(design)
        assert report.replications == 0
        header, rows = report.rows()
        assert rows == []

    def test_estimation_smoke(self):
        design = cg.SimDesign(kappa=3, n_per_compound=4, replications=2, seed=5)
        report = cg.study_estimation(design, fit_restarts=0)
        assert report.estimates.shape == (2, 5)
        header, rows = report.rows()
        assert len(rows) == 5
        assert header[0] == "parameter"

    def test_estimation_deterministic(self):
        design = cg.SimDesign(kappa=3, n_per_compound=4, replications=2, seed=5)
        a = cg.study_estimation(design, fit_restarts=0)
        b = cg.study_estimation(design, fit_restarts=0)
        np.testing.assert_array_equal(a.estimates, b.estimates)

    def test_variance_study_needs_replications(self):
        design = cg.SimDesign(kappa=3, replications=1)
        with pytest.raises(DataError):
            cg.study_variance(design)

    def test_variance_smoke(self):
        design = cg.SimDesign(kappa=3, n_per_compound=4, replications=3, seed=6)
        report = cg.study_variance(design, fit_restarts=0)
        assert np.isfinite(report.uncorrected_msd)
        assert np.isfinite(report.corrected_msd)
        assert len(report.empirical_variance) == 7

    def test_ga_ranks_tiny_space_always_first(self):
        # kappa=3: seven candidates, plenty of generations
        design = cg.SimDesign(kappa=3, n_per_compound=6, replications=2, seed=7)
        ga = cg.GAConfig(k=4, generations=30, x_star=(1.0,), seed=0)
        report = cg.study_ga(design, ga, fit_restarts=0)
        for counts in report.rank_counts.values():
            assert counts["1"] == 2

    def test_ga_zero_generations_histogram_well_defined(self):
        design = cg.SimDesign(kappa=3, n_per_compound=6, replications=2, seed=8)
        ga = cg.GAConfig(k=4, generations=0, x_star=(1.0,), seed=0)
        report = cg.study_ga(design, ga, fit_restarts=0)
        for counts in report.rank_counts.values():
            assert sum(counts.values()) == 2


class TestSvgBoxplot:
    def test_renders_boxes_and_truth_marks(self):
        rng = np.random.default_rng(0)
        svg = render_boxplot_svg(
            {"alpha1": rng.normal(-1, 0.3, 200), "beta": rng.normal(1, 0.35, 200)},
            truths={"alpha1": -1.0, "beta": 1.0},
            title="recovery",
        )
        assert svg.startswith("<svg")
        assert svg.count("<rect") == 2
        assert svg.count('stroke="red"') == 2
        assert "recovery" in svg

    def test_constant_data_does_not_crash(self):
        svg = render_boxplot_svg({"x": np.zeros(10)})
        assert "<svg" in svg
