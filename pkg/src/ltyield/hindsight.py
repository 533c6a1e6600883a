"""Hindsight-optimal benchmark: the best acceptance decisions in retrospect.

With unit demands and a single capacity constraint, the offline problem is a
knapsack with unit weights, so filling greedily in decreasing price order is
exactly optimal: sell min(n, N_1) units to class 1, then spill remaining
capacity down the price ladder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ArrivalRealization, ModelParams


@dataclass(frozen=True)
class HindsightSolution:
    accepted_per_class: np.ndarray
    revenue: float


def hindsight_optimal(params: ModelParams, realization: ArrivalRealization) -> HindsightSolution:
    counts = realization.per_class_counts
    accepted = np.zeros(params.num_classes, dtype=np.int64)
    remaining = params.initial_inventory
    for j in range(params.num_classes):
        take = min(remaining, int(counts[j]))
        accepted[j] = take
        remaining -= take
        if remaining == 0:
            break
    revenue = float(np.dot(accepted, np.asarray(params.prices)))
    accepted.setflags(write=False)
    return HindsightSolution(accepted_per_class=accepted, revenue=revenue)
