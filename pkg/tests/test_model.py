import math

import numpy as np
import pytest
from scipy import stats

from ltyield import ModelParams, SeedSpec, count_remaining, sample_arrivals

CANONICAL = ModelParams((1.0, 1.0), (2.0, 1.0), 1500, 1000.0)


class TestModelParams:
    def test_valid_construction(self):
        p = ModelParams((1.0, 2.0), (5.0, 1.0), 10, 4.0)
        assert p.num_classes == 2
        assert p.total_rate == 3.0
        assert p.alpha == 2.5

    def test_prices_must_decrease(self):
        with pytest.raises(ValueError):
            ModelParams((1.0, 1.0), (1.0, 1.0), 10, 4.0)
        with pytest.raises(ValueError):
            ModelParams((1.0, 1.0), (1.0, 2.0), 10, 4.0)

    def test_rates_positive(self):
        with pytest.raises(ValueError):
            ModelParams((1.0, 0.0), (2.0, 1.0), 10, 4.0)

    def test_inventory_positive_integer(self):
        with pytest.raises(ValueError):
            ModelParams((1.0, 1.0), (2.0, 1.0), 0, 4.0)
        with pytest.raises(ValueError):
            ModelParams((1.0, 1.0), (2.0, 1.0), 1.5, 4.0)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            ModelParams((1.0,), (2.0,), 10, 4.0)

    def test_zero_horizon_allowed(self):
        p = ModelParams((1.0, 1.0), (2.0, 1.0), 5, 0.0)
        assert p.alpha == math.inf


class TestSampling:
    def test_zero_horizon_empty(self):
        p = ModelParams((1.0, 1.0), (2.0, 1.0), 5, 0.0)
        r = sample_arrivals(p, SeedSpec(1))
        assert r.num_events == 0
        assert np.array_equal(r.per_class_counts, [0, 0])

    def test_deterministic_replay(self):
        r1 = sample_arrivals(CANONICAL, SeedSpec(42, 7))
        r2 = sample_arrivals(CANONICAL, SeedSpec(42, 7))
        assert np.array_equal(r1.remaining_times, r2.remaining_times)
        assert np.array_equal(r1.class_indices, r2.class_indices)

    def test_determinism_is_call_order_independent(self):
        specs = [SeedSpec(9, i) for i in range(5)]
        forward = [sample_arrivals(CANONICAL, s).remaining_times for s in specs]
        backward = [sample_arrivals(CANONICAL, s).remaining_times for s in reversed(specs)]
        for f, b in zip(forward, reversed(backward)):
            assert np.array_equal(f, b)

    def test_events_sorted_and_counts_consistent(self):
        r = sample_arrivals(CANONICAL, SeedSpec(3))
        assert np.all(np.diff(r.remaining_times) <= 0)
        counts = np.bincount(r.class_indices, minlength=3)[1:]
        assert np.array_equal(counts, r.per_class_counts)

    def test_total_count_concentration(self):
        # mean over 1000 seeds within 1% of rate * T, single draws within 4 sigma
        mean_total = CANONICAL.total_rate * CANONICAL.horizon
        totals = np.array(
            [sample_arrivals(CANONICAL, SeedSpec(1234, i)).num_events for i in range(1000)]
        )
        assert abs(totals.mean() - mean_total) < 0.01 * mean_total
        assert abs(totals[0] - mean_total) < 4 * math.sqrt(mean_total)

    def test_merged_gaps_are_exponential(self):
        # chi-square on equiprobable exponential bins, significance 0.001
        p = ModelParams((1.0, 1.0), (2.0, 1.0), 10, 10000.0)
        r = sample_arrivals(p, SeedSpec(2024))
        elapsed = p.horizon - r.remaining_times[::-1]
        gaps = np.diff(np.concatenate(([0.0], elapsed)))
        assert gaps.size > 10_000
        nbins = 20
        edges = -np.log1p(-np.arange(nbins + 1) / nbins) / p.total_rate
        edges[-1] = np.inf
        observed, _ = np.histogram(gaps, bins=edges)
        chi2, pvalue = stats.chisquare(observed)
        assert pvalue > 0.001, f"chi2={chi2}, p={pvalue}"

    def test_class_thinning_frequencies(self):
        p = ModelParams((1.0, 3.0), (2.0, 1.0), 10, 50000.0)
        r = sample_arrivals(p, SeedSpec(77))
        n = r.num_events
        assert n > 100_000
        for j, rate in enumerate(p.rates, start=1):
            prob = rate / p.total_rate
            observed = np.count_nonzero(r.class_indices == j)
            sigma = math.sqrt(n * prob * (1 - prob))
            assert abs(observed - n * prob) < 3 * sigma

    def test_csv_dump(self, tmp_path):
        r = sample_arrivals(ModelParams((1.0, 1.0), (2.0, 1.0), 5, 3.0), SeedSpec(5))
        path = tmp_path / "stream.csv"
        r.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "remaining_time,class_index"
        assert len(lines) == r.num_events + 1
        t0, c0 = lines[1].split(",")
        assert float(t0) == r.remaining_times[0]
        assert int(c0) == r.class_indices[0]


class TestCountRemaining:
    def _toy(self):
        return sample_arrivals(ModelParams((1.0, 1.0), (2.0, 1.0), 5, 1.0), SeedSpec(11))

    def test_at_horizon_start_nothing_arrived(self):
        r = self._toy()
        for j in (1, 2):
            assert count_remaining(r, j, r.horizon) == 0

    def test_at_horizon_end_everything_arrived(self):
        r = self._toy()
        for j in (1, 2):
            assert count_remaining(r, j, 0.0) == r.per_class_counts[j - 1]

    def test_hand_trace(self):
        from ltyield import ArrivalRealization

        r = ArrivalRealization(
            remaining_times=np.array([0.9, 0.5]),
            class_indices=np.array([1, 2], dtype=np.int64),
            per_class_counts=np.array([1, 1], dtype=np.int64),
            horizon=1.0,
        )
        assert count_remaining(r, 1, 0.7) == 1
        assert count_remaining(r, 2, 0.7) == 0

    def test_out_of_range_rejected(self):
        r = self._toy()
        with pytest.raises(ValueError):
            count_remaining(r, 1, -0.1)
        with pytest.raises(ValueError):
            count_remaining(r, 1, r.horizon + 0.1)
