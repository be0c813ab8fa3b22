"""Correlation families and covariance assembly."""

import numpy as np
import pytest

import chemgp as cg
from chemgp.errors import InvalidFingerprintError
from chemgp.kernel import FAMILIES, JITTER, correlation_dphi
from conftest import random_space

FP = cg.Fingerprint.from_string

# exp(-sqrt(2/3)/0.5) evaluated at 40 digits with mpmath
EXP_CORR_AT_TWO_THIRDS = 0.1953440019925450


class TestCorrelation:
    def test_zero_distance_is_one_for_every_family(self):
        for family in FAMILIES:
            spec = cg.KernelSpec(family, 1.0, 1.0)
            assert cg.correlation(spec, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_exponential_value(self):
        spec = cg.KernelSpec("exponential", 1.0, 0.5)
        assert cg.correlation(spec, 2 / 3) == pytest.approx(
            EXP_CORR_AT_TWO_THIRDS, abs=1e-12
        )

    def test_gaussian_value(self):
        spec = cg.KernelSpec("gaussian", 1.0, 1.0)
        assert cg.correlation(spec, 0.25) == pytest.approx(np.exp(-0.25), abs=1e-15)

    def test_tanimoto_is_one_minus_t(self):
        spec = cg.KernelSpec("tanimoto", 1.0)
        assert cg.correlation(spec, 2 / 3) == pytest.approx(1 / 3, abs=1e-15)

    def test_independent_is_indicator(self):
        spec = cg.KernelSpec("independent", 1.0)
        assert cg.correlation(spec, 0.0) == 1.0
        assert cg.correlation(spec, 0.3) == 0.0

    def test_domain_error(self):
        spec = cg.KernelSpec("gaussian", 1.0, 1.0)
        with pytest.raises(ValueError):
            cg.correlation(spec, -0.1)
        with pytest.raises(ValueError):
            cg.correlation(spec, 1.1)

    def test_strictly_decreasing(self):
        t = np.linspace(0.0, 1.0, 101)
        for family, phi in (("exponential", 0.7), ("gaussian", 0.7), ("tanimoto", 1.0)):
            vals = cg.correlation(cg.KernelSpec(family, 1.0, phi), t)
            assert np.all(np.diff(vals) < 0.0), family

    def test_phi_limits(self):
        t = np.linspace(0.05, 1.0, 20)
        for family in ("exponential", "gaussian"):
            wide = cg.correlation(cg.KernelSpec(family, 1.0, 1e6), t)
            narrow = cg.correlation(cg.KernelSpec(family, 1.0, 1e-6), t)
            assert np.all(np.abs(wide - 1.0) < 1e-6), family
            assert np.all(np.abs(narrow) < 1e-6), family

    def test_dphi_matches_finite_difference(self):
        t = np.linspace(0.0, 1.0, 9)
        h = 1e-6
        for family in ("exponential", "gaussian"):
            phi = 0.6
            up = cg.correlation(cg.KernelSpec(family, 1.0, phi + h), t)
            dn = cg.correlation(cg.KernelSpec(family, 1.0, phi - h), t)
            fd = (up - dn) / (2 * h)
            analytic = correlation_dphi(cg.KernelSpec(family, 1.0, phi), t)
            np.testing.assert_allclose(analytic, fd, atol=1e-7)
        for family in ("tanimoto", "independent"):
            np.testing.assert_array_equal(
                correlation_dphi(cg.KernelSpec(family, 1.0), t), np.zeros_like(t)
            )

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            cg.KernelSpec("matern", 1.0)
        with pytest.raises(ValueError):
            cg.KernelSpec("gaussian", -1.0)
        with pytest.raises(ValueError):
            cg.KernelSpec("gaussian", 1.0, 0.0)


class TestCovarianceMatrix:
    def test_independent_is_identity(self):
        space = random_space(6, 8, seed=0)
        K = cg.covariance_matrix(cg.KernelSpec("independent", 1.0), space)
        np.testing.assert_allclose(K.matrix, (1.0 + JITTER) * np.eye(6), atol=1e-15)

    def test_tanimoto_scales_similarity(self):
        space = random_space(6, 8, seed=1)
        K = cg.covariance_matrix(cg.KernelSpec("tanimoto", 2.0), space)
        expected = 2.0 * space.similarity + 2.0 * JITTER * np.eye(6)
        np.testing.assert_allclose(K.matrix, expected, atol=1e-14)

    def test_gaussian_on_demo_space_is_pd(self):
        # the sqrt-distance Gaussian kernel stays positive definite on the
        # same space where the raw-distance version is indefinite
        space = cg.counterexample_space()
        K = cg.covariance_matrix(cg.KernelSpec("gaussian", 1.0, 1.0), space)
        assert np.all(np.linalg.eigvalsh(K.matrix) > 0)
        _, bad_eig = cg.naive_gaussian_counterexample()
        assert bad_eig < 0

    def test_pd_for_all_families_on_random_spaces(self):
        for seed in range(3):
            space = random_space(10, 12, seed=seed + 5)
            for family in FAMILIES:
                K = cg.covariance_matrix(cg.KernelSpec(family, 0.8, 0.4), space)
                assert np.all(np.linalg.eigvalsh(K.matrix) > 0), family

    def test_solve_and_logdet_match_dense(self):
        space = random_space(7, 10, seed=9)
        K = cg.covariance_matrix(cg.KernelSpec("exponential", 1.3, 0.8), space)
        b = np.arange(7.0)
        np.testing.assert_allclose(K.solve(b), np.linalg.solve(K.matrix, b), atol=1e-10)
        assert K.logdet() == pytest.approx(np.linalg.slogdet(K.matrix)[1], abs=1e-10)


class TestCrossCovariance:
    def test_training_compound_recovers_column(self):
        space = random_space(8, 10, seed=3)
        spec = cg.KernelSpec("gaussian", 1.5, 0.7)
        K = cg.covariance_matrix(spec, space)
        r = 4
        k_star, k_ss = cg.cross_covariance(spec, space, space.compounds[r])
        # same column up to the diagonal jitter
        np.testing.assert_allclose(k_star, K.matrix[:, r] - JITTER * 1.5 * np.eye(8)[:, r],
                                   atol=1e-12)
        assert k_ss == pytest.approx(1.5)

    def test_independent_unseen_candidate_is_zero(self):
        space = random_space(8, 10, seed=4)
        spec = cg.KernelSpec("independent", 1.0)
        candidate = None
        for packed in range(1, 1 << 10):
            if space.index_of(cg.Fingerprint(packed, 10)) is None:
                candidate = cg.Fingerprint(packed, 10)
                break
        k_star, k_ss = cg.cross_covariance(spec, space, candidate)
        np.testing.assert_array_equal(k_star, np.zeros(8))
        assert k_ss == 1.0

    def test_constant_distance_candidate(self):
        # every training compound sits at distance 2/3 from the candidate
        space = cg.build_space([FP("100000"), FP("010000"), FP("001000")])
        cand = FP("111000")
        np.testing.assert_allclose(space.distances_to(cand), 2 / 3)
        spec = cg.KernelSpec("exponential", 1.7, 0.5)
        k_star, k_ss = cg.cross_covariance(spec, space, cand)
        np.testing.assert_allclose(
            k_star, 1.7 * EXP_CORR_AT_TWO_THIRDS * np.ones(3), atol=1e-12
        )
        assert k_ss == pytest.approx(1.7)

    def test_all_zero_candidate_rejected(self):
        space = random_space(5, 6, seed=5)
        with pytest.raises(InvalidFingerprintError):
            cg.cross_covariance(cg.KernelSpec("gaussian", 1.0, 1.0), space,
                                cg.Fingerprint(0, 6))
