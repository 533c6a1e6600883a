from itertools import product

import numpy as np
import pytest

from ltyield import ArrivalRealization, ModelParams, hindsight_optimal


def _realization(counts, horizon=10.0):
    counts = np.asarray(counts, dtype=np.int64)
    times = []
    classes = []
    slot = horizon
    for j, c in enumerate(counts, start=1):
        for _ in range(int(c)):
            slot *= 0.99
            times.append(slot)
            classes.append(j)
    order = np.argsort(times)[::-1]
    return ArrivalRealization(
        remaining_times=np.array(times)[order],
        class_indices=np.array(classes, dtype=np.int64)[order],
        per_class_counts=counts,
        horizon=horizon,
    )


def brute_force_best(n, counts, prices):
    """Exhaustive search over acceptance vectors; the independent oracle."""
    best = -1.0
    best_vec = None
    ranges = [range(c + 1) for c in counts]
    for vec in product(*ranges):
        if sum(vec) > n:
            continue
        rev = sum(a * p for a, p in zip(vec, prices))
        if rev > best:
            best = rev
            best_vec = vec
    return best, best_vec


def test_two_class_split():
    p = ModelParams((1.0, 1.0), (2.0, 1.0), 5, 10.0)
    sol = hindsight_optimal(p, _realization([3, 4]))
    assert np.array_equal(sol.accepted_per_class, [3, 2])
    assert sol.revenue == 8.0


def test_two_class_class1_saturates():
    p = ModelParams((1.0, 1.0), (2.0, 1.0), 5, 10.0)
    sol = hindsight_optimal(p, _realization([7, 1]))
    assert np.array_equal(sol.accepted_per_class, [5, 0])
    assert sol.revenue == 5 * 2.0


def test_three_class_against_brute_force_example():
    p = ModelParams((1.0, 1.0, 1.0), (3.0, 2.0, 1.0), 4, 10.0)
    sol = hindsight_optimal(p, _realization([1, 2, 5]))
    assert np.array_equal(sol.accepted_per_class, [1, 2, 1])
    expected, _ = brute_force_best(4, [1, 2, 5], p.prices)
    assert sol.revenue == expected == 8.0


@pytest.mark.parametrize("num_classes", [2, 3])
def test_greedy_matches_exhaustive_search(num_classes):
    prices = (3.0, 2.0, 1.0)[:num_classes]
    rates = (1.0,) * num_classes
    for n in range(1, 7):
        p = ModelParams(rates, prices, n, 10.0)
        for counts in product(range(7), repeat=num_classes):
            sol = hindsight_optimal(p, _realization(counts))
            expected, _ = brute_force_best(n, counts, prices)
            assert sol.revenue == expected, (n, counts)


def test_invariants_on_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        counts = rng.integers(0, 20, size=3)
        p = ModelParams((1.0, 1.0, 1.0), (4.0, 2.5, 1.0), n, 10.0)
        sol = hindsight_optimal(p, _realization(counts))
        acc = sol.accepted_per_class
        assert acc.sum() <= n
        assert np.all(acc <= counts)
        assert sol.revenue == pytest.approx(float(np.dot(acc, p.prices)))
