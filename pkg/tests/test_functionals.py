"""Posterior functionals against closed-form lognormal-mixture oracles."""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from ldpdsurv.functionals import (
    CovariateProfile,
    bayes_factor_spike,
    cdf_at,
    coordinate_labels,
    default_time_grid,
    density_at,
    hazard_at,
    hpd_interval,
    log_scale_correlations,
    mean_at,
    median_at,
    posterior_curves,
    posterior_scalars,
    spike_probability,
    survival_at,
)
from ldpdsurv.mcmc import DrawSnapshot, PosteriorDraws

# two-component lognormal mixture oracles, frozen from independent quadrature:
# weights 0.5/0.5, log locations 0 and log 2, log sd 0.5 has mean
# 1.5 * exp(0.125); weights 0.3/0.7, log locations 0 and 1, log sd 0.5 has
# median 2.1321144738608515
MIX_MEAN = 1.6997226796002396
MIX_MEDIAN = 2.1321144738608515
Z_975 = 1.959963984540054


def snapshot(atom_shifts, weights, var=0.25, event_shifts=None):
    """Single-item snapshot with intercept-only designs (p = q = 1)."""
    atoms = np.zeros((len(atom_shifts), 2))
    atoms[:, 0] = atom_shifts
    atoms[:, 1] = event_shifts if event_shifts is not None else 0.0
    return DrawSnapshot(
        weights=np.asarray(weights, dtype=float),
        atoms=atoms,
        kernel_cov=np.array([[var, 0.0], [0.0, var]]),
        discount=0.0,
        strength=1.0,
        base_mean=np.zeros(2),
        base_cov=np.eye(2),
    )


PROFILE = CovariateProfile(
    onset_covariates=[1.0], event_covariates=[1.0], target="onset", label="p"
)


def make_draws(shift_rows, weight_rows, vars_, discount=None, spike_weight=0.5):
    """Hand-built PosteriorDraws for a single item with p = q = 1."""
    k = len(shift_rows)
    level = len(shift_rows[0])
    atoms = np.zeros((k, level, 2))
    atoms[:, :, 0] = shift_rows
    weights = np.asarray(weight_rows, dtype=float)
    kernel = np.zeros((k, 2, 2))
    for i, v in enumerate(vars_):
        kernel[i] = np.eye(2) * v
    if discount is None:
        discount = np.zeros(k)
    return PosteriorDraws(
        sticks=weights.copy(),
        weights=weights,
        atoms=atoms,
        kernel_cov=kernel,
        discount=np.asarray(discount, dtype=float),
        strength=np.ones(k),
        base_mean=np.zeros((k, 2)),
        base_cov=np.tile(np.eye(2), (k, 1, 1)),
        kept_sweeps=np.arange(1, k + 1),
        chain_ids=np.zeros(k, dtype=np.int64),
        log_likelihood=np.zeros((1, k)),
        occupied_clusters=np.ones((1, k), dtype=np.int64),
        meta={"n_items": 1, "spike_weight": spike_weight},
    )


class TestCovariateProfile:
    def test_slices_two_items(self):
        # layout: onset blocks for items 1..n, then event blocks
        prof = CovariateProfile(
            onset_covariates=[1.0, 2.0],
            event_covariates=[1.0, 0.0, 3.0],
            item_index=2,
            target="onset",
        )
        assert prof.coefficient_slice(2) == slice(2, 4)
        assert prof.coordinate(2) == 1
        gap = CovariateProfile(
            onset_covariates=[1.0, 2.0],
            event_covariates=[1.0, 0.0, 3.0],
            item_index=2,
            target="gap",
        )
        assert gap.coefficient_slice(2) == slice(7, 10)
        assert gap.coordinate(2) == 3
        np.testing.assert_array_equal(gap.covariates, [1.0, 0.0, 3.0])

    def test_item_index_beyond_model(self):
        prof = CovariateProfile([1.0], [1.0], item_index=3)
        with pytest.raises(ValueError, match="item_index"):
            prof.coefficient_slice(2)

    def test_rejects_bad_target(self):
        with pytest.raises(ValueError, match="target"):
            CovariateProfile([1.0], [1.0], target="event")

    def test_rejects_bad_item_index(self):
        with pytest.raises(ValueError, match="item_index"):
            CovariateProfile([1.0], [1.0], item_index=0)


class TestPointwiseFunctionals:
    def test_cdf_two_term_oracle(self):
        snap = snapshot([0.0, 1.0], [0.3, 0.7])
        t = np.array([0.5, 1.0, 2.0, 8.0])
        ref = 0.3 * stats.norm.cdf(np.log(t) / 0.5) + 0.7 * stats.norm.cdf(
            (np.log(t) - 1.0) / 0.5
        )
        np.testing.assert_allclose(cdf_at(snap, PROFILE, t), ref, atol=1e-14)
        np.testing.assert_allclose(
            survival_at(snap, PROFILE, t), 1.0 - ref, atol=1e-14
        )

    def test_density_matches_scipy(self):
        snap = snapshot([0.0, 1.0], [0.3, 0.7])
        t = np.array([0.4, 1.3, 3.0])
        ref = 0.3 * stats.lognorm(s=0.5, scale=1.0).pdf(t) + 0.7 * stats.lognorm(
            s=0.5, scale=math.e
        ).pdf(t)
        np.testing.assert_allclose(density_at(snap, PROFILE, t), ref, rtol=1e-12)

    def test_hazard_identity_and_floor(self):
        snap = snapshot([0.0, 1.0], [0.3, 0.7])
        t = 1.7
        ratio = density_at(snap, PROFILE, t) / survival_at(snap, PROFILE, t)
        assert hazard_at(snap, PROFILE, t) == pytest.approx(ratio, rel=1e-12)
        # survival underflows to zero roughly 50 sds out in log time
        assert math.isnan(hazard_at(snap, PROFILE, 7e10))

    def test_mean_oracle(self):
        snap = snapshot([0.0, math.log(2.0)], [0.5, 0.5])
        assert mean_at(snap, PROFILE) == pytest.approx(MIX_MEAN, rel=1e-13)

    def test_mean_overflow_saturates(self):
        snap = snapshot([1e4], [1.0])
        with pytest.warns(RuntimeWarning, match="overflow"):
            assert mean_at(snap, PROFILE) == math.inf

    def test_median_symmetric_mixture(self):
        snap = snapshot([0.0, 2.0], [0.5, 0.5], var=1.0)
        assert median_at(snap, PROFILE) == pytest.approx(math.e, abs=1e-6)

    def test_median_asymmetric_oracle(self):
        snap = snapshot([0.0, 1.0], [0.3, 0.7])
        assert median_at(snap, PROFILE) == pytest.approx(MIX_MEDIAN, abs=1e-6)

    def test_median_uses_wide_bracket(self):
        snap = snapshot([math.log(5e3)], [1.0])
        assert median_at(snap, PROFILE) == pytest.approx(5e3, rel=1e-5)

    def test_median_degenerate_raises(self):
        snap = snapshot([20.0], [1.0])
        with pytest.raises(ValueError, match="not bracketed"):
            median_at(snap, PROFILE)

    def test_single_atom_is_exact_lognormal(self):
        snap = snapshot([0.7], [1.0], var=0.36)
        ref = stats.lognorm(s=0.6, scale=math.exp(0.7))
        t = np.array([0.5, 2.0, 5.0])
        np.testing.assert_allclose(cdf_at(snap, PROFILE, t), ref.cdf(t), atol=1e-15)
        np.testing.assert_allclose(density_at(snap, PROFILE, t), ref.pdf(t), rtol=1e-13)
        assert median_at(snap, PROFILE) == pytest.approx(math.exp(0.7), abs=1e-7)
        assert mean_at(snap, PROFILE) == pytest.approx(math.exp(0.7 + 0.18), rel=1e-13)

    def test_gap_target_uses_event_block(self):
        snap = snapshot([0.0], [1.0], event_shifts=[1.5])
        prof = CovariateProfile([1.0], [1.0], target="gap")
        assert median_at(snap, prof) == pytest.approx(math.exp(1.5), abs=1e-6)

    def test_rejects_nonpositive_times(self):
        snap = snapshot([0.0], [1.0])
        with pytest.raises(ValueError, match="positive"):
            cdf_at(snap, PROFILE, 0.0)


class TestHpdInterval:
    def test_normal_quantiles(self, rng):
        draws = rng.standard_normal(100_000)
        lo, hi = hpd_interval(draws, 0.95)
        assert lo == pytest.approx(-Z_975, abs=0.05)
        assert hi == pytest.approx(Z_975, abs=0.05)

    def test_skewed_sample_is_left_anchored(self, rng):
        draws = rng.exponential(size=200_000)
        lo, hi = hpd_interval(draws, 0.95)
        assert lo < 0.01
        assert hi == pytest.approx(-math.log(0.05), abs=0.1)

    def test_matrix_columns(self, rng):
        arr = np.column_stack([rng.standard_normal(5000), 5.0 + rng.standard_normal(5000)])
        lo, hi = hpd_interval(arr, 0.9)
        assert lo.shape == (2,)
        assert lo[1] - lo[0] == pytest.approx(5.0, abs=0.2)

    def test_nan_column_propagates(self):
        arr = np.ones((100, 2))
        arr[3, 1] = np.nan
        lo, hi = hpd_interval(arr, 0.5)
        assert lo[0] == 1.0 and hi[0] == 1.0
        assert math.isnan(lo[1]) and math.isnan(hi[1])

    def test_tiny_sample_returns_range(self):
        lo, hi = hpd_interval(np.array([3.0, 1.0, 2.0]), 0.95)
        assert (lo, hi) == (1.0, 3.0)

    def test_validation(self):
        with pytest.raises(ValueError, match="level"):
            hpd_interval(np.ones(10), 1.0)
        with pytest.raises(ValueError, match="sample"):
            hpd_interval(np.empty(0), 0.5)


class TestPosteriorCurves:
    def test_mean_and_band_match_direct_computation(self):
        k = 60
        gen = np.random.default_rng(7)
        shifts = gen.normal(0.0, 0.2, size=(k, 2)) + [0.0, 1.0]
        weights = np.full((k, 2), 0.5)
        vars_ = np.full(k, 0.25)
        draws = make_draws(shifts, weights, vars_)
        t = np.geomspace(0.2, 10.0, 31)
        grid = posterior_curves(draws, PROFILE, t, functional="survival")
        direct = np.array(
            [survival_at(draws.snapshot(i), PROFILE, t, n_items=1) for i in range(k)]
        )
        np.testing.assert_allclose(grid.values, direct, atol=1e-13)
        np.testing.assert_allclose(grid.mean, direct.mean(axis=0), atol=1e-13)
        lo, hi = hpd_interval(direct, 0.95)
        np.testing.assert_allclose(grid.hpd_lower, lo, atol=1e-13)
        np.testing.assert_allclose(grid.hpd_upper, hi, atol=1e-13)
        assert np.all(np.diff(grid.values, axis=1) <= 1e-12)

    def test_hazard_nan_band(self):
        draws = make_draws([[0.0]], [[1.0]], [0.25])
        draws2 = PosteriorDraws.merge([draws, draws])
        t = np.array([1.0, 7e10])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            grid = posterior_curves(draws2, PROFILE, t, functional="hazard")
        assert math.isfinite(grid.mean[0])
        assert math.isnan(grid.hpd_lower[1])

    def test_few_draws_warns(self):
        draws = make_draws([[0.0]] * 10, [[1.0]] * 10, [0.25] * 10)
        with pytest.warns(RuntimeWarning, match="draws"):
            posterior_curves(draws, PROFILE, np.array([1.0, 2.0]))

    def test_rejects_bad_grid(self):
        draws = make_draws([[0.0]] * 60, [[1.0]] * 60, [0.25] * 60)
        with pytest.raises(ValueError, match="increasing"):
            posterior_curves(draws, PROFILE, np.array([2.0, 1.0]))
        with pytest.raises(ValueError, match="functional"):
            posterior_curves(draws, PROFILE, np.array([1.0, 2.0]), functional="mode")


class TestPosteriorScalars:
    def test_matches_per_draw_functions(self):
        k = 40
        gen = np.random.default_rng(11)
        shifts = gen.normal(0.0, 0.3, size=(k, 3))
        weights = gen.dirichlet(np.ones(3), size=k)
        vars_ = gen.uniform(0.04, 0.5, size=k)
        draws = make_draws(shifts, weights, vars_)
        medians = posterior_scalars(draws, PROFILE, "median")
        means = posterior_scalars(draws, PROFILE, "mean")
        for i in range(k):
            snap = draws.snapshot(i)
            assert medians[i] == pytest.approx(median_at(snap, PROFILE, 1), abs=1e-6)
            assert means[i] == pytest.approx(mean_at(snap, PROFILE, 1), rel=1e-12)

    def test_unknown_functional(self):
        draws = make_draws([[0.0]], [[1.0]], [0.25])
        with pytest.raises(ValueError, match="functional"):
            posterior_scalars(draws, PROFILE, "mode")


class TestDefaultTimeGrid:
    def test_spans_predictive_quantiles(self):
        draws = make_draws([[0.0]] * 60, [[1.0]] * 60, [0.25] * 60)
        grid = default_time_grid(draws, PROFILE, n_points=101)
        assert grid.size == 101
        z = stats.norm.ppf(0.001)
        assert grid[0] == pytest.approx(math.exp(0.5 * z), rel=1e-6)
        assert grid[-1] == pytest.approx(math.exp(-0.5 * z), rel=1e-6)
        ratios = grid[1:] / grid[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)

    def test_pools_profiles(self):
        draws = make_draws([[0.0]] * 60, [[1.0]] * 60, [0.25] * 60)
        far = CovariateProfile([2.0], [1.0], target="onset")  # shift doubled
        grid = default_time_grid(draws, [PROFILE, far], n_points=51)
        assert grid[0] < 1.0 < grid[-1]

    def test_requires_two_points(self):
        draws = make_draws([[0.0]] * 60, [[1.0]] * 60, [0.25] * 60)
        with pytest.raises(ValueError, match="n_points"):
            default_time_grid(draws, PROFILE, n_points=1)


class TestCorrelationsAndSpike:
    def test_fixed_correlation_recovered(self):
        k = 30
        kernel = np.array([[1.0, 0.6 * 0.5], [0.6 * 0.5, 0.25]])
        draws = make_draws([[0.0]] * k, [[1.0]] * k, [1.0] * k)
        draws.kernel_cov = np.tile(kernel, (k, 1, 1))
        rows = log_scale_correlations(draws)
        assert len(rows) == 1
        row = rows[0]
        assert (row.first, row.second) == ("onset1", "gap1")
        assert row.mean == pytest.approx(0.6, abs=1e-12)
        assert row.hpd_lower == pytest.approx(0.6, abs=1e-12)

    def test_label_mismatch(self):
        draws = make_draws([[0.0]] * 5, [[1.0]] * 5, [1.0] * 5)
        with pytest.raises(ValueError, match="labels"):
            log_scale_correlations(draws, labels=["a"])

    def test_spike_probability_counts_exact_zeros(self):
        draws = make_draws(
            [[0.0]] * 4, [[1.0]] * 4, [1.0] * 4, discount=[0.0, 0.2, 0.0, 0.1]
        )
        assert spike_probability(draws) == 0.5

    def test_bayes_factor_even_prior(self):
        discount = np.concatenate([np.zeros(25), np.full(75, 0.3)])
        draws = make_draws(
            [[0.0]] * 100, [[1.0]] * 100, [1.0] * 100, discount=discount
        )
        assert bayes_factor_spike(draws) == pytest.approx(3.0, rel=1e-12)

    def test_bayes_factor_uneven_prior(self):
        discount = np.concatenate([np.zeros(50), np.full(50, 0.3)])
        draws = make_draws(
            [[0.0]] * 100, [[1.0]] * 100, [1.0] * 100, discount=discount
        )
        # posterior odds 1, prior odds (1 - 0.2) / 0.2 = 4
        assert bayes_factor_spike(draws, spike_weight=0.2) == pytest.approx(0.25)

    def test_bayes_factor_degenerate(self):
        all_slab = make_draws(
            [[0.0]] * 4, [[1.0]] * 4, [1.0] * 4, discount=[0.1] * 4
        )
        with pytest.warns(RuntimeWarning, match="inf"):
            assert bayes_factor_spike(all_slab) == math.inf
        all_spike = make_draws([[0.0]] * 4, [[1.0]] * 4, [1.0] * 4)
        with pytest.warns(RuntimeWarning, match="0"):
            assert bayes_factor_spike(all_spike) == 0.0

    def test_bayes_factor_needs_weight(self):
        draws = make_draws([[0.0]] * 4, [[1.0]] * 4, [1.0] * 4)
        draws.meta.pop("spike_weight")
        with pytest.raises(ValueError, match="spike_weight"):
            bayes_factor_spike(draws)
        with pytest.raises(ValueError, match="strictly"):
            bayes_factor_spike(draws, spike_weight=1.0)

    def test_coordinate_labels(self):
        assert coordinate_labels(2) == ["onset1", "onset2", "gap1", "gap2"]
