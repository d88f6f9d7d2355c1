"""
Tests for the Wilcoxon signed-rank test, rank-biserial effect size,
REML mixed model and Benjamini-Hochberg adjustment.
"""

import itertools

import numpy as np
import pytest
from scipy import stats

from ruler.core.errors import (
    AllZeroDifferencesError,
    DegenerateVarianceError,
    LengthMismatchError,
    NonFiniteInputError,
    PValueRangeError,
    TooFewGroupsError,
)
from ruler.stats.lmm import lmm_reml, reml_loglik
from ruler.stats.multiple import benjamini_hochberg
from ruler.stats.wilcoxon import (
    WilcoxonMethod,
    effect_size_label,
    rank_biserial,
    wilcoxon_one_sample,
    wilcoxon_paired,
)


def _enumerated_p(diffs):
    """Two-sided p from all 2^n sign assignments of the observed midranks."""
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0]
    doubled = np.rint(2 * stats.rankdata(np.abs(d))).astype(np.int64)
    observed = min(int(doubled[d > 0].sum()), int(doubled[d < 0].sum()))
    n = doubled.size
    at_most = 0
    for signs in itertools.product((0, 1), repeat=n):
        if int(np.dot(signs, doubled)) <= observed:
            at_most += 1
    return min(1.0, 2.0 * at_most / 2 ** n)


def _balanced_groups(k, n, sigma_u, sigma_e, seed):
    rng = np.random.default_rng(seed)
    effects = rng.normal(0.0, sigma_u, size=k)
    values = np.repeat(effects, n) + rng.normal(0.0, sigma_e, size=k * n)
    groups = np.repeat([f"g{i}" for i in range(k)], n)
    return values, groups


class TestWilcoxon:
    """Tests for the signed-rank test."""

    def test_three_positive(self):
        """Test [1, 2, 3] against 0 enumerates to p = 0.25."""
        result = wilcoxon_one_sample([1.0, 2.0, 3.0])

        assert result.w == 0.0
        assert result.w_plus == 6.0
        assert result.p_two_sided == 0.25
        assert result.r_rb == 1.0
        assert result.exact

    def test_symmetric_pair(self):
        """Test [-1, 1] gives equal rank sums and no effect."""
        result = wilcoxon_one_sample([-1.0, 1.0])

        assert result.w_plus == result.w_minus == 1.5
        assert result.r_rb == 0.0
        assert result.p_two_sided == 1.0

    def test_minimum_p_at_five(self):
        """Test the smallest achievable p with five observations is 0.0625."""
        result = wilcoxon_one_sample([0.1, 0.2, 0.3, 0.4, 0.5], null_value=0.0)

        assert result.p_two_sided == 0.0625

    def test_zeros_dropped(self):
        """Test zero differences are removed before ranking."""
        result = wilcoxon_one_sample([0.5, 0.5, 1.0, 2.0, 3.0], null_value=0.5)

        assert result.n_effective == 3
        assert result.p_two_sided == 0.25

    def test_all_zero(self):
        """Test all-zero differences are an error."""
        with pytest.raises(AllZeroDifferencesError):
            wilcoxon_one_sample([0.5, 0.5], null_value=0.5)

    def test_non_finite(self):
        """Test NaN input is rejected."""
        with pytest.raises(NonFiniteInputError):
            wilcoxon_one_sample([1.0, float("nan")])

    def test_exact_matches_enumeration(self):
        """Test exact p equals brute-force enumeration for every n <= 12."""
        rng = np.random.default_rng(11)
        checked = 0
        for n in range(1, 13):
            for _ in range(20):
                diffs = rng.integers(-5, 6, size=n).astype(float)
                if not np.any(diffs):
                    continue
                result = wilcoxon_one_sample(diffs, method=WilcoxonMethod.EXACT)
                assert result.p_two_sided == _enumerated_p(diffs)
                checked += 1
        assert checked >= 200

    def test_approx_matches_scipy(self):
        """Test the normal approximation against scipy on tie-free data."""
        x = np.random.default_rng(12).normal(0.3, 1.0, size=30)

        ours = wilcoxon_one_sample(x, method=WilcoxonMethod.APPROX)
        ref = stats.wilcoxon(x, zero_method="wilcox", correction=True, method="approx")

        assert not ours.exact
        assert ours.w == pytest.approx(ref.statistic)
        assert ours.p_two_sided == pytest.approx(ref.pvalue, rel=1e-9)
        assert ours.z <= 0.0

    def test_auto_switches_at_cutoff(self):
        """Test auto mode is exact up to the cutoff only."""
        x = np.arange(1.0, 26.0)

        assert wilcoxon_one_sample(x[:20]).exact
        assert not wilcoxon_one_sample(x).exact
        assert not wilcoxon_one_sample(x[:20], exact_cutoff=10).exact


class TestWilcoxonPaired:
    """Tests for the paired variant."""

    def test_identical_samples(self):
        """Test identical samples have no non-zero difference."""
        with pytest.raises(AllZeroDifferencesError):
            wilcoxon_paired([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_definitional(self):
        """Test paired equals one-sample on the differences."""
        a, b = [5.0, 6.0, 2.0], [3.0, 2.0, 3.0]

        paired = wilcoxon_paired(a, b)
        single = wilcoxon_one_sample([2.0, 4.0, -1.0])

        assert paired == single

    def test_full_dominance_ten(self):
        """Test ten tied positive differences give p = 2/1024."""
        result = wilcoxon_paired(np.ones(10) * 2.0, np.ones(10))

        assert result.p_two_sided == pytest.approx(2 / 1024, abs=0)
        assert result.r_rb == 1.0

    def test_length_mismatch(self):
        """Test unequal lengths are rejected."""
        with pytest.raises(LengthMismatchError):
            wilcoxon_paired([1.0, 2.0], [1.0])


class TestRankBiserial:
    """Tests for the effect size."""

    def test_spot_values(self):
        """Test total dominance, the null midpoint and direct arithmetic."""
        assert rank_biserial(0.0, 10) == 1.0
        assert rank_biserial(10 * 11 / 4, 10) == 0.0
        assert rank_biserial(5.0, 4) == 0.0

    def test_random_inputs(self):
        """Test randomised inputs against the direct formula."""
        rng = np.random.default_rng(13)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            w = float(rng.uniform(0, n * (n + 1) / 2))
            expected = 1.0 - 4.0 * w / (n * (n + 1))
            assert rank_biserial(w, n) == pytest.approx(expected, rel=0, abs=2e-16)

    def test_out_of_range(self):
        """Test impossible rank sums are rejected."""
        with pytest.raises(ValueError):
            rank_biserial(100.0, 3)

    @pytest.mark.parametrize(
        "r,label",
        [(0.05, "negligible"), (0.1, "small"), (-0.35, "medium"), (0.5, "large"), (1.0, "large")],
    )
    def test_labels(self, r, label):
        """Test conventional magnitude labels."""
        assert effect_size_label(r) == label


class TestLmm:
    """Tests for the REML random-intercept model."""

    def test_balanced_matches_anova(self):
        """Test REML variance components equal the one-way ANOVA estimators."""
        k, n = 8, 6
        values, groups = _balanced_groups(k, n, sigma_u=2.0, sigma_e=0.5, seed=21)
        means = values.reshape(k, n).mean(axis=1)
        ms_within = float(((values.reshape(k, n) - means[:, None]) ** 2).sum() / (k * (n - 1)))
        ms_between = float(n * ((means - values.mean()) ** 2).sum() / (k - 1))
        assert ms_between > ms_within

        fit = lmm_reml(values, groups)

        assert not fit.singular
        assert fit.sigma_e2 == pytest.approx(ms_within, abs=1e-6)
        assert fit.sigma_u2 == pytest.approx((ms_between - ms_within) / n, abs=1e-6)
        assert fit.intercept == pytest.approx(values.mean(), abs=1e-9)
        assert fit.n_groups == k and fit.n_obs == k * n

    def test_singular_equal_group_means(self):
        """Test identical group means give a singular fit with the pooled one-sample SE."""
        base = np.array([0.1, 0.4, -0.2, 0.7, 0.3])
        rng = np.random.default_rng(22)
        values = np.concatenate([rng.permutation(base) for _ in range(6)])
        groups = np.repeat(np.arange(6), base.size)

        fit = lmm_reml(values, groups)

        assert fit.singular
        assert fit.sigma_u2 == 0.0
        assert fit.icc == 0.0
        assert fit.intercept == pytest.approx(values.mean(), abs=1e-12)
        pooled_se = values.std(ddof=1) / np.sqrt(values.size)
        assert fit.se_intercept == pytest.approx(pooled_se, rel=1e-9)

    def test_high_icc(self):
        """Test dominant between-group variance gives ICC near 1."""
        values, groups = _balanced_groups(10, 10, sigma_u=1.0, sigma_e=0.1, seed=23)

        fit = lmm_reml(values, groups)

        assert fit.icc > 0.95
        assert 0.0 <= fit.p_wald <= 1.0

    def test_maximum_found(self):
        """Test the returned ratio beats every point of a dense grid on unbalanced data."""
        rng = np.random.default_rng(24)
        for _ in range(10):
            sizes = rng.integers(2, 9, size=6)
            groups = np.repeat(np.arange(6), sizes)
            values = rng.normal(0, 0.7, size=6)[groups] + rng.normal(0, 1.0, size=groups.size)

            fit = lmm_reml(values, groups)
            best = fit.reml_loglik
            for lam in np.logspace(-8, 4, 200):
                assert reml_loglik(values, groups, lam) <= best + 1e-9

    def test_wald_p(self):
        """Test the Wald p matches the normal tail of z."""
        values, groups = _balanced_groups(5, 8, sigma_u=0.5, sigma_e=1.0, seed=25)
        values = values + 1.0

        fit = lmm_reml(values, groups)

        assert fit.wald_z == pytest.approx(fit.intercept / fit.se_intercept)
        assert fit.p_wald == pytest.approx(2 * stats.norm.sf(abs(fit.wald_z)))

    def test_too_few_groups(self):
        """Test one group is rejected."""
        with pytest.raises(TooFewGroupsError):
            lmm_reml([1.0, 2.0, 3.0], ["a", "a", "a"])

    def test_degenerate_variance(self):
        """Test constant groups have no within-group variance."""
        with pytest.raises(DegenerateVarianceError):
            lmm_reml([1.0, 1.0, 2.0, 2.0], ["a", "a", "b", "b"])

    def test_non_finite(self):
        """Test NaN values are rejected."""
        with pytest.raises(NonFiniteInputError):
            lmm_reml([1.0, float("inf"), 2.0, 3.0], ["a", "a", "b", "b"])


class TestBenjaminiHochberg:
    """Tests for the step-up adjustment."""

    def test_direct_formula(self):
        """Test [0.01, 0.02, 0.04] adjusts to [0.03, 0.03, 0.04]."""
        np.testing.assert_allclose(benjamini_hochberg([0.01, 0.02, 0.04]), [0.03, 0.03, 0.04])

    def test_trivial_cases(self):
        """Test all-ones, a single p and an empty input."""
        np.testing.assert_array_equal(benjamini_hochberg([1.0, 1.0]), [1.0, 1.0])
        np.testing.assert_array_equal(benjamini_hochberg([0.037]), [0.037])
        assert benjamini_hochberg([]).size == 0

    def test_order_restored(self):
        """Test adjusted values come back in input order."""
        adjusted = benjamini_hochberg([0.04, 0.01, 0.02])

        np.testing.assert_allclose(adjusted, [0.04, 0.03, 0.03])

    def test_reference_loop(self):
        """Test against an explicit min over j >= i loop."""
        rng = np.random.default_rng(31)
        for _ in range(500):
            p = rng.uniform(0, 1, size=int(rng.integers(1, 25))) ** 3
            m = p.size
            order = np.argsort(p, kind="mergesort")
            ranked = p[order]
            expected = np.empty(m)
            for i in range(m):
                expected[order[i]] = min(1.0, min(ranked[j] * m / (j + 1) for j in range(i, m)))

            np.testing.assert_allclose(benjamini_hochberg(p), expected, rtol=1e-12)

    def test_monotone_and_bounded(self):
        """Test adjusted values dominate raw values and stay within 1."""
        p = np.random.default_rng(32).uniform(size=24)

        adjusted = benjamini_hochberg(p)

        assert np.all(adjusted >= p)
        assert np.all(adjusted <= 1.0)

    def test_out_of_range(self):
        """Test p-values outside [0, 1] are rejected."""
        with pytest.raises(PValueRangeError):
            benjamini_hochberg([0.5, 1.2])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
