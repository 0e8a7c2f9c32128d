"""Reliability maps, temperature scaling, and quantile fits."""

import numpy as np
import pytest

from xconsist.calibration import (
    LinearFit,
    ScoredPrediction,
    quantile_fit,
    reliability_map,
    temperature_scale,
)


def preds(pairs):
    return [ScoredPrediction(f"s{i}", ll, q) for i, (ll, q) in enumerate(pairs)]


def linear_data(slope, intercept, xs):
    return preds([(x, slope * x + intercept) for x in xs])


class TestReliabilityMap:
    def test_exact_linear_data_recovers_slope(self):
        data = linear_data(2.0, 1.0, [float(x) for x in range(-10, 11)])
        rmap = reliability_map(data, n_bins=7)
        assert rmap.fit_slope == pytest.approx(2.0, abs=1e-9)
        assert rmap.fit_intercept == pytest.approx(1.0, abs=1e-9)
        assert rmap.fit_mse < 1e-12
        assert not rmap.degenerate_fit

    def test_constant_quality_gives_zero_slope(self):
        data = preds([(float(x), 5.0) for x in range(20)])
        rmap = reliability_map(data, n_bins=5)
        assert rmap.fit_slope == pytest.approx(0.0, abs=1e-12)
        assert rmap.fit_mse == pytest.approx(0.0, abs=1e-12)

    def test_noisy_known_slope_recovered(self):
        rng = np.random.default_rng(42)
        xs = rng.uniform(-5.0, 5.0, 1000)
        ys = 0.5 * xs + 0.01 * rng.standard_normal(1000)
        data = preds(list(zip(xs, ys)))
        rmap = reliability_map(data, n_bins=10)
        assert rmap.fit_slope == pytest.approx(0.5, abs=0.05)
        # Cross-check the engine's fit against an independent least-squares
        # oracle over the same bin means.
        mx = [m for m in rmap.bin_mean_loglik if m is not None]
        my = [m for m in rmap.bin_mean_quality if m is not None]
        oracle_slope, oracle_intercept = np.polyfit(mx, my, 1)
        assert rmap.fit_slope == pytest.approx(oracle_slope, abs=1e-10)
        assert rmap.fit_intercept == pytest.approx(oracle_intercept, abs=1e-10)

    def test_counts_sum_to_n_and_every_sample_binned(self):
        rng = np.random.default_rng(0)
        data = preds([(float(v), 0.0) for v in rng.uniform(-3, 3, 257)])
        rmap = reliability_map(data, n_bins=8)
        assert sum(rmap.bin_count) == 257
        assert rmap.cumulative_fraction[-1] == pytest.approx(1.0)
        assert all(
            rmap.cumulative_fraction[i] <= rmap.cumulative_fraction[i + 1]
            for i in range(len(rmap.cumulative_fraction) - 1)
        )

    def test_boundary_values_assign_to_lower_bin_except_max(self):
        # Range [0, 4] with 4 bins: edges at 0,1,2,3,4.
        data = preds([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)])
        rmap = reliability_map(data, n_bins=4)
        # 0 -> bin0 (global min), 1 -> bin0, 2 -> bin1, 3 -> bin2, 4 -> bin3.
        assert rmap.bin_count == (2, 1, 1, 1)

    def test_zero_width_range_flagged(self):
        data = preds([(1.5, 2.0), (1.5, 4.0), (1.5, 6.0)])
        rmap = reliability_map(data, n_bins=10)
        assert rmap.degenerate_fit
        assert rmap.fit_slope is None and rmap.fit_mse is None
        assert rmap.bin_count == (3,)
        assert rmap.bin_mean_quality == (4.0,)

    def test_single_populated_bin_flagged(self):
        data = preds([(0.0, 1.0), (1e-9, 1.0)])
        rmap = reliability_map(data, n_bins=1)
        assert rmap.degenerate_fit

    def test_requires_two_points_and_positive_bins(self):
        with pytest.raises(ValueError):
            reliability_map(preds([(1.0, 1.0)]))
        with pytest.raises(ValueError):
            reliability_map(preds([(1.0, 1.0), (2.0, 2.0)]), n_bins=0)

    def test_positive_correlation_detector(self):
        # Generated positive slope with bounded noise: fitted slope > 0 in
        # at least 49 of 50 seeds at n = 10^4.
        hits = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            xs = rng.uniform(0.0, 1.0, 10_000)
            ys = 0.5 * xs + rng.uniform(-0.2, 0.2, 10_000)
            rmap = reliability_map(preds(list(zip(xs, ys))), n_bins=10)
            hits += rmap.fit_slope > 0
        assert hits >= 49


class TestTemperatureScale:
    def test_identity_at_one_is_byte_exact(self):
        rng = np.random.default_rng(5)
        data = preds([(float(v), float(q)) for v, q in rng.uniform(-9, 3, (64, 2))])
        scaled = temperature_scale(data, 1.0)
        assert scaled == data

    def test_halving(self):
        data = preds([(-4.0, 1.0), (-1.0, 2.0)])
        scaled = temperature_scale(data, 2.0)
        assert [d.loglik for d in scaled] == [-2.0, -0.5]
        assert [d.quality for d in scaled] == [1.0, 2.0]

    def test_ordering_invariance(self):
        rng = np.random.default_rng(6)
        data = preds([(float(v), 0.0) for v in rng.standard_normal(200)])
        base_order = np.argsort([d.loglik for d in data], kind="stable")
        for t in (0.1, 1.0, 7.3, 1e6):
            scaled = temperature_scale(data, t)
            order = np.argsort([d.loglik for d in scaled], kind="stable")
            assert np.array_equal(base_order, order)

    def test_slope_scales_with_temperature(self):
        data = linear_data(2.0, 0.0, [float(x) for x in range(-8, 9)])
        base = reliability_map(data, n_bins=5)
        scaled = reliability_map(temperature_scale(data, 2.0), n_bins=5)
        assert scaled.fit_slope == pytest.approx(2.0 * base.fit_slope, rel=1e-9)

    def test_rejects_nonpositive(self):
        data = preds([(1.0, 1.0), (2.0, 2.0)])
        for t in (0.0, -1.0, float("nan")):
            with pytest.raises(ValueError):
                temperature_scale(data, t)


def outlier_fixture():
    """95% of points on an exact line, top-5% logliks far off the line."""
    xs = [float(x) / 10.0 for x in range(950)]
    data = [(x, 0.5 * x + 1.0) for x in xs]
    data += [(100.0 + i, -50.0) for i in range(50)]
    return preds(data)


class TestQuantileFit:
    def test_full_quantile_equals_reliability_fit(self):
        data = outlier_fixture()
        rmap = reliability_map(data, n_bins=10)
        fit = quantile_fit(data, 1.0, n_bins=10)
        assert fit == LinearFit(rmap.fit_slope, rmap.fit_intercept, rmap.fit_mse)

    def test_dropping_outliers_strictly_reduces_mse(self):
        data = outlier_fixture()
        full = quantile_fit(data, 1.0, n_bins=10)
        trimmed = quantile_fit(data, 0.95, n_bins=10)
        assert trimmed.mse < full.mse
        assert trimmed.slope == pytest.approx(0.5, abs=1e-6)

    def test_too_small_quantile_rejected(self):
        data = preds([(float(x), float(x)) for x in range(10)])
        with pytest.raises(ValueError):
            quantile_fit(data, 0.1)

    def test_quantile_bounds(self):
        data = preds([(float(x), float(x)) for x in range(10)])
        for q in (0.0, -0.5, 1.2):
            with pytest.raises(ValueError):
                quantile_fit(data, q)

    def test_drop_count_uses_loglik_order_not_input_order(self):
        # Outliers placed first in the list must still be the ones dropped.
        data = preds([(50.0, -9.0)] + [(float(x), 2.0 * x) for x in range(20)])
        fit = quantile_fit(data, 0.95, n_bins=5)
        assert fit.slope == pytest.approx(2.0, abs=1e-9)


class TestScoredPrediction:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ScoredPrediction("s", float("inf"), 0.0)
        with pytest.raises(ValueError):
            ScoredPrediction("s", 0.0, float("nan"))
