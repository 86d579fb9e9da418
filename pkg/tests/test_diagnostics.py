"""Tests for the scalar convergence diagnostics."""

import numpy as np
import pytest

from ldpdsurv.diagnostics import (
    effective_sample_size,
    mann_kendall_pvalue,
    potential_scale_reduction,
)


class TestEffectiveSampleSize:
    def test_iid_trace_near_full_size(self, rng):
        n = 50_000
        ess = effective_sample_size(rng.standard_normal(n))
        assert 0.9 * n <= ess <= n

    def test_ar1_matches_theory(self, rng):
        # AR(1) with phi = 0.9 has integrated autocorrelation time
        # (1 + phi) / (1 - phi) = 19, so ESS should be about n / 19.
        phi = 0.9
        n = 200_000
        innovations = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = innovations[0] / np.sqrt(1.0 - phi**2)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + innovations[t]
        ess = effective_sample_size(x)
        expected = n / 19.0
        assert abs(ess - expected) / expected < 0.20

    def test_trending_trace_collapses(self, rng):
        n = 5_000
        x = np.linspace(0.0, 10.0, n) + 0.01 * rng.standard_normal(n)
        assert effective_sample_size(x) < n / 100

    def test_constant_trace_returns_n(self):
        assert effective_sample_size(np.full(500, 3.25)) == 500.0

    def test_short_trace_returns_n(self):
        assert effective_sample_size([1.0, 2.0, 0.5]) == 3.0

    def test_clamped_between_one_and_n(self, rng):
        x = rng.standard_normal(64)
        ess = effective_sample_size(x)
        assert 1.0 <= ess <= 64.0


class TestPotentialScaleReduction:
    def test_identical_chains_unsplit(self, rng):
        trace = rng.standard_normal(2_000)
        chains = np.vstack([trace, trace])
        rhat = potential_scale_reduction(chains, split=False)
        assert abs(rhat - 1.0) < 1e-6

    def test_well_mixed_chains_near_one(self, rng):
        chains = rng.standard_normal((4, 5_000))
        assert potential_scale_reduction(chains) < 1.01

    def test_diverged_means_detected(self, rng):
        chains = rng.standard_normal((2, 1_000))
        chains[1] += 5.0
        assert potential_scale_reduction(chains) > 1.5

    def test_split_detects_trend_in_single_chain(self, rng):
        trace = np.linspace(0.0, 5.0, 4_000) + 0.1 * rng.standard_normal(4_000)
        assert potential_scale_reduction(trace[None, :], split=True) > 1.2

    def test_constant_chains_return_one(self):
        chains = np.ones((3, 100))
        assert potential_scale_reduction(chains, split=False) == 1.0

    def test_floor_at_one(self, rng):
        # Between-chain variance can dip below its expectation by chance; the
        # estimate is floored rather than reported below 1.
        for _ in range(10):
            chains = rng.standard_normal((2, 10))
            assert potential_scale_reduction(chains, split=False) >= 1.0

    def test_single_chain_unsplit_rejected(self, rng):
        with pytest.raises(ValueError, match="two chains"):
            potential_scale_reduction(rng.standard_normal((1, 100)), split=False)

    def test_too_short_to_split(self, rng):
        with pytest.raises(ValueError, match="too short"):
            potential_scale_reduction(rng.standard_normal((2, 3)), split=True)

    def test_too_few_draws(self, rng):
        with pytest.raises(ValueError, match="two draws"):
            potential_scale_reduction(rng.standard_normal((3, 1)), split=False)


class TestMannKendall:
    def test_monotone_trend_rejected(self):
        p = mann_kendall_pvalue(np.arange(50, dtype=float))
        assert p < 1e-10

    def test_white_noise_accepted(self, rng):
        p = mann_kendall_pvalue(rng.standard_normal(500))
        assert p > 0.01

    def test_constant_trace(self):
        assert mann_kendall_pvalue(np.full(20, 1.5)) == 1.0

    def test_too_short(self):
        with pytest.raises(ValueError, match="three points"):
            mann_kendall_pvalue([1.0, 2.0])

    def test_matches_kendalltau(self, rng):
        from scipy.stats import kendalltau

        x = rng.standard_normal(200).cumsum()
        expected = kendalltau(np.arange(200), x).pvalue
        assert mann_kendall_pvalue(x) == pytest.approx(expected)
