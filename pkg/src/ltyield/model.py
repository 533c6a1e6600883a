"""Problem instances and seeded multi-class Poisson arrival streams.

Time convention: ``t`` is the time *remaining* until the end of the selling
horizon, so ``t = T`` is the start of the horizon and ``t = 0`` the end.
Streams are generated internally in elapsed time and converted, which is the
natural sampling order for exponential gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """A two-or-more-class yield management instance.

    Classes are indexed 1..K in strictly decreasing price order: class 1 is
    the most valuable. ``rates[j-1]`` / ``prices[j-1]`` belong to class j.
    A zero horizon is permitted as the degenerate empty-stream instance.
    """

    rates: tuple[float, ...]
    prices: tuple[float, ...]
    initial_inventory: int
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if len(self.rates) < 2:
            raise ValueError("at least two customer classes are required")
        if len(self.prices) != len(self.rates):
            raise ValueError("rates and prices must have the same length")
        if any(r <= 0 for r in self.rates):
            raise ValueError("all arrival rates must be strictly positive")
        if any(p <= 0 for p in self.prices):
            raise ValueError("all prices must be strictly positive")
        if any(a <= b for a, b in zip(self.prices, self.prices[1:])):
            raise ValueError("prices must be strictly decreasing by class")
        if not (isinstance(self.initial_inventory, (int, np.integer)) and self.initial_inventory >= 1):
            raise ValueError("initial_inventory must be an integer >= 1")
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be a finite non-negative real")

    @property
    def num_classes(self) -> int:
        return len(self.rates)

    @property
    def total_rate(self) -> float:
        return float(sum(self.rates))

    @property
    def alpha(self) -> float:
        """Initial inventory-to-horizon ratio n/T (infinite when T = 0)."""
        if self.horizon == 0:
            return math.inf
        return self.initial_inventory / self.horizon


@dataclass(frozen=True)
class SeedSpec:
    """Stateless stream identity: (master seed, replication index).

    Streams are derived with a counter-based generator so that the same pair
    always yields the same realization, independent of call order, thread
    count, or how many other streams were drawn first.
    """

    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if self.replication_index < 0:
            raise ValueError("replication_index must be non-negative")

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed % (1 << 64), self.replication_index % (1 << 64)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ArrivalRealization:
    """One sampled arrival stream over [T, 0], shared across policies.

    Events are sorted by decreasing remaining time (i.e., in the order they
    occur). ``class_indices`` are 1-based.
    """

    remaining_times: np.ndarray
    class_indices: np.ndarray
    per_class_counts: np.ndarray
    horizon: float

    def __post_init__(self):
        t = self.remaining_times
        c = self.class_indices
        if t.shape != c.shape:
            raise ValueError("times and classes must have equal length")
        if t.size and (np.any(np.diff(t) > 0) or t[0] > self.horizon or t[-1] < 0):
            raise ValueError("remaining_times must be non-increasing within [0, T]")
        counts = np.bincount(c, minlength=self.per_class_counts.size + 1)[1:]
        if not np.array_equal(counts, self.per_class_counts):
            raise ValueError("per_class_counts inconsistent with events")
        for arr in (t, c, self.per_class_counts):
            arr.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return int(self.per_class_counts.size)

    @property
    def num_events(self) -> int:
        return int(self.remaining_times.size)

    @property
    def events(self) -> list[tuple[float, int]]:
        return [(float(t), int(c)) for t, c in zip(self.remaining_times, self.class_indices)]

    def to_csv(self, path) -> None:
        """Dump events as CSV (remaining_time, class_index), 17 significant digits."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("remaining_time,class_index\n")
            for t, c in zip(self.remaining_times, self.class_indices):
                fh.write(f"{t:.17g},{c:d}\n")


def sample_arrivals(params: ModelParams, seed: SeedSpec | int) -> ArrivalRealization:
    """Sample one multi-class Poisson stream over the horizon.

    Uses the conditional-uniform construction: draw the merged count from a
    Poisson with mean (sum of rates) * T, place the events uniformly, and mark
    each event's class by rate-proportional thinning. This is exactly a marked
    Poisson process, so per-class inter-arrival gaps are i.i.d. exponential.
    """
    if isinstance(seed, (int, np.integer)):
        seed = SeedSpec(int(seed))
    rng = seed.generator()
    total_rate = params.total_rate
    horizon = float(params.horizon)
    count = int(rng.poisson(total_rate * horizon)) if horizon > 0 else 0
    remaining = np.sort(rng.random(count) * horizon)[::-1].copy()
    cum = np.cumsum(np.asarray(params.rates)) / total_rate
    classes = np.searchsorted(cum, rng.random(count), side="right").astype(np.int64) + 1
    per_class = np.bincount(classes, minlength=params.num_classes + 1)[1:]
    return ArrivalRealization(
        remaining_times=remaining,
        class_indices=classes,
        per_class_counts=per_class,
        horizon=horizon,
    )


def count_remaining(realization: ArrivalRealization, class_index: int, t: float) -> int:
    """Number of class-j arrivals that have occurred by remaining time t.

    Counts events with remaining_time >= t; non-increasing in t.
    """
    if not 0 <= t <= realization.horizon:
        raise ValueError(f"t={t} outside [0, {realization.horizon}]")
    if not 1 <= class_index <= realization.num_classes:
        raise ValueError(f"class_index={class_index} outside [1, {realization.num_classes}]")
    mask = realization.class_indices == class_index
    return int(np.count_nonzero(mask & (realization.remaining_times >= t)))
