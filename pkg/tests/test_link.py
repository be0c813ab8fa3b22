"""Link functions, their derivatives, and the b-term ratios."""

import numpy as np
import pytest

import chemgp as cg
from chemgp.link import (
    LINKS,
    LinkSpec,
    b_terms,
    b_terms_grad,
    interval_prob,
    inv_link,
    inv_link_d1,
    inv_link_d2,
    link_quantile,
)

# frozen with mpmath at 40 digits
PHI_196 = 0.9750021048517796  # standard normal CDF at 1.96
CLOGLOG_0 = 0.6321205588285577  # 1 - exp(-1)
NORM_PDF_0 = 0.3989422804014327  # 1/sqrt(2 pi)
B1_PROBIT_LOWEST = 0.7978845608028654  # pdf(0)/cdf(0)

ALL_SPECS = [LinkSpec(name) for name in LINKS]

# ranges where the float64 CDF is not yet saturated at 0.0 or 1.0
SAFE_RANGE = {
    "logit": (-30.0, 30.0),
    "probit": (-8.0, 7.5),
    "cloglog": (-30.0, 3.4),
    "loglog": (-3.4, 30.0),
}


class TestInverseLink:
    def test_logit_at_zero(self):
        assert inv_link(LinkSpec("logit"), 0.0) == 0.5

    def test_probit_value(self):
        assert inv_link(LinkSpec("probit"), 1.96) == pytest.approx(PHI_196, abs=1e-12)

    def test_cloglog_at_zero(self):
        assert inv_link(LinkSpec("cloglog"), 0.0) == pytest.approx(CLOGLOG_0, abs=1e-12)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_strictly_increasing(self, spec):
        lo, hi = SAFE_RANGE[spec.name]
        eta = np.linspace(lo, hi, 1000)
        vals = inv_link(spec, eta)
        assert np.all(np.diff(vals) > 0)
        assert np.all((vals > 0) & (vals < 1))

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_limits(self, spec):
        assert inv_link(spec, -40.0) < 1e-10
        assert inv_link(spec, 40.0) > 1 - 1e-10

    def test_non_finite_rejected(self):
        for bad in (np.inf, -np.inf, np.nan):
            with pytest.raises(ValueError):
                inv_link(LinkSpec("logit"), bad)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            LinkSpec("cauchit")


class TestDerivatives:
    def test_logit_at_zero(self):
        assert inv_link_d1(LinkSpec("logit"), 0.0) == pytest.approx(0.25, abs=1e-15)
        assert inv_link_d2(LinkSpec("logit"), 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_probit_at_zero(self):
        assert inv_link_d1(LinkSpec("probit"), 0.0) == pytest.approx(NORM_PDF_0, abs=1e-12)
        assert inv_link_d2(LinkSpec("probit"), 0.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_first_derivative_positive(self, spec):
        lo, hi = SAFE_RANGE[spec.name]
        eta = np.linspace(max(lo, -8), min(hi, 8), 161)
        assert np.all(inv_link_d1(spec, eta) > 0)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_matches_finite_differences(self, spec):
        eta = np.linspace(-8, 8, 81)
        h = 1e-5
        fd1 = (inv_link(spec, eta + h) - inv_link(spec, eta - h)) / (2 * h)
        fd2 = (inv_link_d1(spec, eta + h) - inv_link_d1(spec, eta - h)) / (2 * h)
        np.testing.assert_allclose(inv_link_d1(spec, eta), fd1, atol=1e-6)
        np.testing.assert_allclose(inv_link_d2(spec, eta), fd2, atol=1e-6)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_quantile_inverts(self, spec):
        p = np.linspace(0.01, 0.99, 25)
        np.testing.assert_allclose(inv_link(spec, link_quantile(spec, p)), p, atol=1e-12)


class TestBTerms:
    def test_logit_interior_symmetry(self):
        # symmetric thresholds: equal density values cancel in the numerator
        b1, _ = b_terms(LinkSpec("logit"), 1.0, -1.0)
        assert b1 == pytest.approx(0.0, abs=1e-15)

    def test_probit_lowest_class(self):
        b1, _ = b_terms(LinkSpec("probit"), 0.0, -np.inf)
        assert b1 == pytest.approx(B1_PROBIT_LOWEST, abs=1e-12)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_highest_class_is_negative(self, spec):
        for eta in (-2.0, 0.0, 2.0):
            b1, _ = b_terms(spec, np.inf, eta)
            assert b1 < 0

    @pytest.mark.parametrize("name", ["logit", "probit"])
    def test_log_concavity(self, name):
        # b'' - (b')^2 < 0 in all three threshold cases keeps the mode
        # curvature positive definite
        spec = LinkSpec(name)
        grid = np.linspace(-5, 5, 21)
        for hi in grid:
            b1, b2 = b_terms(spec, hi, -np.inf)
            assert b2 - b1**2 < 0
            b1, b2 = b_terms(spec, np.inf, hi)
            assert b2 - b1**2 < 0
            for lo in grid[grid < hi]:
                b1, b2 = b_terms(spec, hi, lo)
                assert b2 - b1**2 < 0

    def test_ordering_error(self):
        with pytest.raises(ValueError):
            b_terms(LinkSpec("logit"), -1.0, 1.0)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_grad_matches_finite_differences(self, spec):
        h = 1e-6
        for hi, lo in ((1.2, -0.4), (0.3, -2.0), (4.0, 2.5)):
            d_hi, d_lo = b_terms_grad(spec, np.array([hi]), np.array([lo]))
            fd_hi = (b_terms(spec, hi + h, lo)[0] - b_terms(spec, hi - h, lo)[0]) / (2 * h)
            fd_lo = (b_terms(spec, hi, lo + h)[0] - b_terms(spec, hi, lo - h)[0]) / (2 * h)
            assert d_hi[0] == pytest.approx(fd_hi, abs=2e-5)
            assert d_lo[0] == pytest.approx(fd_lo, abs=2e-5)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_sentinel_grads_are_zero(self, spec):
        d_hi, d_lo = b_terms_grad(spec, np.array([np.inf]), np.array([0.5]))
        assert d_hi[0] == 0.0
        d_hi, d_lo = b_terms_grad(spec, np.array([0.5]), np.array([-np.inf]))
        assert d_lo[0] == 0.0


class TestIntervalProb:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=LINKS)
    def test_matches_direct_difference_in_safe_region(self, spec):
        hi, lo = 1.4, -0.7
        expected = inv_link(spec, hi) - inv_link(spec, lo)
        assert interval_prob(spec, hi, lo) == pytest.approx(expected, rel=1e-12)

    def test_deep_upper_tail_does_not_cancel(self):
        # a direct CDF difference would round to exactly zero here
        spec = LinkSpec("probit")
        p = interval_prob(spec, 37.0, 36.0)
        assert 0 < p < 1e-280
        naive = inv_link(spec, 37.0) - inv_link(spec, 36.0)
        assert naive == 0.0

    def test_sentinels(self):
        spec = LinkSpec("logit")
        assert interval_prob(spec, np.inf, 0.0) == pytest.approx(0.5)
        assert interval_prob(spec, 0.0, -np.inf) == pytest.approx(0.5)
        total = interval_prob(spec, np.inf, -np.inf)
        assert total == pytest.approx(1.0)
