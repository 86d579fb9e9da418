"""Stick-breaking prior: weights, cluster counts, and moment identities."""

import numpy as np
import pytest
from scipy import stats

from ldpdsurv.pdprocess import (
    PDParams,
    StickState,
    expected_tail_mass,
    measure_correlation,
    measure_covariance,
    measure_variance,
    prior_cluster_counts,
    sample_sticks_prior,
    stick_shape2,
    truncation_level_for_tail,
)

# E[number of clusters] among 3 draws, by the sequential seating recursion
# E[k_{i+1}] = E[k_i] + (strength + discount * E[k_i]) / (strength + i):
# Dirichlet (0, 1): 1 + 1/2 + 1/3; discount 0.5, strength 1: 2.375.
THREE_CUSTOMER_MEAN_DP = 11.0 / 6.0
THREE_CUSTOMER_MEAN_PY = 2.375


class TestPDParams:
    def test_valid_range(self):
        PDParams(0.0, 1.0)
        PDParams(0.99, -0.5)

    @pytest.mark.parametrize("discount", [-0.1, 1.0, 1.5])
    def test_bad_discount(self, discount):
        with pytest.raises(ValueError, match="discount"):
            PDParams(discount, 1.0)

    def test_bad_strength(self):
        with pytest.raises(ValueError, match="strength"):
            PDParams(0.3, -0.3)

    def test_is_dirichlet(self):
        assert PDParams(0.0, 2.0).is_dirichlet
        assert not PDParams(0.01, 2.0).is_dirichlet

    def test_stick_shape2(self):
        np.testing.assert_allclose(
            stick_shape2(PDParams(0.25, 2.0), [1, 2, 4]), [2.25, 2.5, 3.0]
        )


class TestStickState:
    def test_from_sticks_weights(self):
        state = StickState.from_sticks([0.5, 0.5, 0.7])
        np.testing.assert_allclose(state.weights[:2], [0.5, 0.25])
        assert state.sticks[-1] == 1.0
        assert state.weights.sum() == 1.0
        assert state.truncation_level == 3

    def test_single_stick(self):
        state = StickState.from_sticks([0.2])
        assert state.sticks[0] == 1.0
        assert state.weights[0] == 1.0

    def test_consistency_error_small(self, rng):
        state = sample_sticks_prior(PDParams(0.3, 2.0), 80, rng)
        assert state.consistency_error() < 1e-12
        assert state.weights.sum() == 1.0

    def test_rejects_out_of_range_sticks(self):
        with pytest.raises(ValueError, match="sticks"):
            StickState.from_sticks([0.0, 1.0])
        with pytest.raises(ValueError, match="sticks"):
            StickState.from_sticks([1.2, 1.0])

    def test_rejects_mismatched_arrays(self):
        with pytest.raises(ValueError, match="equal length"):
            StickState(np.array([0.5, 1.0]), np.array([1.0]))

    def test_rejects_unnormalised_weights(self):
        with pytest.raises(ValueError, match="sum to 1"):
            StickState(np.array([0.5, 1.0]), np.array([0.5, 0.4]))


class TestSticksPrior:
    def test_first_stick_uniform_under_dirichlet_unit_strength(self, rng):
        # V_1 ~ Beta(1, 1) when discount 0 and strength 1
        draws = np.array(
            [sample_sticks_prior(PDParams(0.0, 1.0), 5, rng).sticks[0] for _ in range(4000)]
        )
        assert abs(draws.mean() - 0.5) < 3.0 * draws.std() / np.sqrt(draws.size)
        assert stats.kstest(draws, stats.uniform.cdf).pvalue > 0.01

    def test_stick_marginals_match_beta(self, rng):
        params = PDParams(0.3, 2.0)
        draws = np.array(
            [sample_sticks_prior(params, 6, rng).sticks[:2] for _ in range(3000)]
        )
        for j in (1, 2):
            ref = stats.beta(1.0 - params.discount, stick_shape2(params, j))
            assert stats.kstest(draws[:, j - 1], ref.cdf).pvalue > 0.01

    def test_final_stick_forced_to_one(self, rng):
        state = sample_sticks_prior(PDParams(0.5, 0.5), 12, rng)
        assert state.sticks[-1] == 1.0

    def test_invalid_level(self, rng):
        with pytest.raises(ValueError, match="level"):
            sample_sticks_prior(PDParams(0.0, 1.0), 0, rng)


class TestClusterCounts:
    def test_three_customers_dirichlet(self, rng):
        counts = prior_cluster_counts(PDParams(0.0, 1.0), 3, 40_000, rng)
        se = counts.std() / np.sqrt(counts.size)
        assert abs(counts.mean() - THREE_CUSTOMER_MEAN_DP) < 3.0 * se

    def test_three_customers_pitman_yor(self, rng):
        counts = prior_cluster_counts(PDParams(0.5, 1.0), 3, 40_000, rng)
        se = counts.std() / np.sqrt(counts.size)
        assert abs(counts.mean() - THREE_CUSTOMER_MEAN_PY) < 3.0 * se

    def test_single_customer(self, rng):
        counts = prior_cluster_counts(PDParams(0.2, 1.0), 1, 50, rng)
        assert np.all(counts == 1)

    def test_counts_bounded_by_customers(self, rng):
        counts = prior_cluster_counts(PDParams(0.7, 0.5), 20, 500, rng)
        assert np.all((1 <= counts) & (counts <= 20))

    def test_requires_customers(self, rng):
        with pytest.raises(ValueError, match="customer"):
            prior_cluster_counts(PDParams(0.0, 1.0), 0, 10, rng)


class TestMeasureMoments:
    def test_variance_formula(self):
        assert measure_variance(PDParams(0.3, 1.0), 0.4) == pytest.approx(
            0.4 * 0.6 * 0.7 / 2.0
        )

    def test_covariance_formula(self):
        assert measure_covariance(PDParams(0.3, 1.0), 0.3, 0.4) == pytest.approx(
            -0.3 * 0.4 * 0.7 / 2.0
        )

    def test_correlation_free_of_params(self):
        val = measure_correlation(0.25, 0.25)
        assert val == pytest.approx(-0.25 / 0.75)

    def test_input_validation(self):
        params = PDParams(0.0, 1.0)
        with pytest.raises(ValueError, match="base_mass"):
            measure_variance(params, 1.2)
        with pytest.raises(ValueError, match="disjoint"):
            measure_covariance(params, 0.7, 0.6)

    def test_monte_carlo_agreement(self, rng):
        # Random measure mass of B = (0, p) with uniform atoms: the variance
        # and disjoint-set covariance identities should hold for the truncated
        # process once the expected tail mass is negligible.
        params = PDParams(0.3, 1.0)
        level = truncation_level_for_tail(params, 1e-6)
        n = 20_000
        shape2 = stick_shape2(params, np.arange(1, level))
        chunks = []
        for start in range(0, n, 2000):
            size = min(2000, n - start)
            sticks = np.ones((size, level))
            sticks[:, :-1] = rng.beta(1.0 - params.discount, shape2, size=(size, level - 1))
            leftover = np.ones((size, level))
            np.cumprod(1.0 - sticks[:, :-1], axis=1, out=leftover[:, 1:])
            weights = sticks * leftover
            atoms = rng.random((size, level))
            chunks.append(
                np.stack(
                    [
                        (weights * (atoms < 0.3)).sum(axis=1),
                        (weights * ((0.3 <= atoms) & (atoms < 0.7))).sum(axis=1),
                    ],
                    axis=1,
                )
            )
        masses = np.concatenate(chunks)

        centred = masses - masses.mean(axis=0)
        sq = centred[:, 0] ** 2
        var_hat = sq.mean()
        var_se = sq.std() / np.sqrt(n)
        assert abs(var_hat - measure_variance(params, 0.3)) < 3.0 * var_se

        prod = centred[:, 0] * centred[:, 1]
        cov_hat = prod.mean()
        cov_se = prod.std() / np.sqrt(n)
        assert abs(cov_hat - measure_covariance(params, 0.3, 0.4)) < 3.0 * cov_se


class TestTailMass:
    def test_level_one_keeps_everything(self):
        assert expected_tail_mass(PDParams(0.3, 2.0), 1) == 1.0

    def test_dirichlet_closed_form(self):
        # discount 0: tail after L - 1 sticks is (b / (b + 1)) ** (L - 1)
        assert expected_tail_mass(PDParams(0.0, 1.0), 11) == pytest.approx(0.5**10)

    def test_matches_monte_carlo(self, rng):
        params = PDParams(0.3, 2.0)
        tails = np.array(
            [1.0 - sample_sticks_prior(params, 15, rng).weights[:-1].sum() for _ in range(4000)]
        )
        se = tails.std() / np.sqrt(tails.size)
        assert abs(tails.mean() - expected_tail_mass(params, 15)) < 3.0 * se

    def test_decreasing_in_level(self):
        params = PDParams(0.5, 1.0)
        vals = [expected_tail_mass(params, lvl) for lvl in range(1, 30)]
        assert np.all(np.diff(vals) < 0.0)

    def test_level_for_tail_boundary(self):
        params = PDParams(0.25, 1.5)
        tol = 1e-4
        level = truncation_level_for_tail(params, tol)
        assert expected_tail_mass(params, level) < tol
        assert expected_tail_mass(params, level - 1) >= tol

    def test_level_for_tail_dirichlet_exact(self):
        # (1/2) ** (L - 1) < 1e-4 first holds at L = 15
        assert truncation_level_for_tail(PDParams(0.0, 1.0), 1e-4) == 15

    def test_level_for_tail_unreachable(self):
        with pytest.raises(ValueError, match="no truncation level"):
            truncation_level_for_tail(PDParams(0.9, 1.0), 1e-6, max_level=100)

    def test_level_for_tail_bad_tolerance(self):
        with pytest.raises(ValueError, match="tolerance"):
            truncation_level_for_tail(PDParams(0.0, 1.0), 0.0)
