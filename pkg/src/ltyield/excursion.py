"""Closed-form excursion statistics, the deterministic LP, and tail bounds.

An excursion is a sample-path segment that starts and ends on the guiding
line without touching it in between: one phase strictly above (all arrivals
accepted) followed by one phase strictly below (only class-1 accepted). Its
expected phase lengths admit closed forms driven by the root nu < 1 of

    nu * exp(-nu) = (lambda12 / beta) * exp(-lambda12 / beta),

with kappa = lambda12 - beta * nu: E[above] = 1/kappa and
E[below] = (lambda12 - beta) / (kappa * (beta - lambda1)). The fraction of
excursion time spent above reduces algebraically to (beta - lambda1)/lambda2,
which coincides with the LP's optimal accepted fraction of class 2 when the
initial inventory sits on the line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import ModelParams

__all__ = [
    "DlpSolution",
    "ExcursionStats",
    "crossing_tail_bound",
    "excursion_stats",
    "simulate_crossing_frequency",
    "simulate_excursions",
    "solve_dlp",
    "solve_nu",
]


@dataclass(frozen=True)
class ExcursionStats:
    nu: float
    kappa: float
    expected_above: float
    expected_below: float
    above_fraction: float


@dataclass(frozen=True)
class DlpSolution:
    z1: float
    z2: float
    objective: float


def solve_nu(lambda12: float, beta: float) -> float:
    """Unique root in (0, 1) of x*exp(-x) = (lambda12/beta)*exp(-lambda12/beta).

    x*exp(-x) is strictly increasing on (0, 1), so plain bisection brackets
    the root; 1e-13 residual costs ~45 halvings and is robust as the rate
    ratio approaches 1 from above.
    """
    if not (0 < beta < lambda12):
        raise ValueError("requires 0 < beta < lambda12")
    ratio = lambda12 / beta
    target = ratio * math.exp(-ratio)
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if mid * math.exp(-mid) < target:
            lo = mid
        else:
            hi = mid
        if abs(mid * math.exp(-mid) - target) <= 1e-16:
            break
    return 0.5 * (lo + hi)


def excursion_stats(lambda1: float, lambda2: float, beta: float) -> ExcursionStats:
    if not lambda1 < beta < lambda1 + lambda2:
        raise ValueError("requires lambda1 < beta < lambda1 + lambda2")
    lambda12 = lambda1 + lambda2
    nu = solve_nu(lambda12, beta)
    kappa = lambda12 - beta * nu
    expected_above = 1.0 / kappa
    expected_below = (lambda12 - beta) / (kappa * (beta - lambda1))
    frac_durations = expected_above / (expected_above + expected_below)
    frac_closed = (beta - lambda1) / lambda2
    if abs(frac_durations - frac_closed) > 1e-12:
        raise AssertionError(
            f"excursion fraction mismatch: {frac_durations} vs {frac_closed}"
        )
    return ExcursionStats(
        nu=nu,
        kappa=kappa,
        expected_above=expected_above,
        expected_below=expected_below,
        above_fraction=frac_closed,
    )


def solve_dlp(params: ModelParams) -> DlpSolution:
    """Closed-form optimum of the two-class deterministic LP relaxation.

    max l1*T*p1*z1 + l2*T*p2*z2 over z in [0,1]^2 s.t. l1*T*z1 + l2*T*z2 <= n.
    Class 1 pays more, so saturate it first.
    """
    if params.num_classes != 2:
        raise ValueError("solve_dlp requires exactly two classes")
    l1, l2 = params.rates
    p1, p2 = params.prices
    n = params.initial_inventory
    horizon = params.horizon
    if l1 * horizon >= n:
        z1 = n / (l1 * horizon)
        z2 = 0.0
    else:
        z1 = 1.0
        z2 = min(1.0, (n - l1 * horizon) / (l2 * horizon))
    objective = l1 * horizon * p1 * z1 + l2 * horizon * p2 * z2
    return DlpSolution(z1=z1, z2=z2, objective=objective)


def crossing_tail_bound(lambda12_scaled: float, delta: float, n: int) -> float:
    """Upper bound n * exp(-delta^2 n / (2*lambda12 + 2*delta)) on the
    probability that the all-accept path ever falls below the lambda12-line.

    Stated in the rescaled regime alpha = 1 (so the horizon equals n) with
    lambda12 < 1 and delta = 1 - lambda12; callers rescale rates by alpha
    first. Dominates the line-crossing probability for any steeper guide
    line, hence bounds the regret-driving crossing event when alpha exceeds
    the total arrival rate.
    """
    if delta <= 0:
        raise ValueError("delta must be strictly positive (bound is vacuous otherwise)")
    if not 0 < lambda12_scaled < 1:
        raise ValueError("requires 0 < lambda12_scaled < 1")
    if n < 1:
        raise ValueError("n must be a positive integer")
    return n * math.exp(-delta * delta * n / (2.0 * lambda12_scaled + 2.0 * delta))


# --------------------------------------------------------------------------
# simulation oracles
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _simulate_excursions(lambda1, lambda12, beta, count, seed):
    np.random.seed(seed)
    above = np.empty(count)
    below = np.empty(count)
    for k in range(count):
        # above phase: drift +beta, merged arrivals drop the path by 1
        pos = 0.0
        t_above = 0.0
        while True:
            gap = np.random.exponential(1.0 / lambda12)
            pos += beta * gap
            t_above += gap
            pos -= 1.0
            if pos < 0.0:
                break
        above[k] = t_above
        # below phase: only class-1 arrivals move the path
        t_below = 0.0
        while True:
            to_line = -pos / beta
            gap = np.random.exponential(1.0 / lambda1)
            if gap >= to_line:
                t_below += to_line
                break
            pos += beta * gap - 1.0
            t_below += gap
        below[k] = t_below
    return above, below


def simulate_excursions(
    lambda1: float, lambda2: float, beta: float, count: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sample complete excursions; returns (above, below) phase durations."""
    if not lambda1 < beta < lambda1 + lambda2:
        raise ValueError("requires lambda1 < beta < lambda1 + lambda2")
    if count < 1:
        raise ValueError("count must be >= 1")
    return _simulate_excursions(
        float(lambda1), float(lambda1 + lambda2), float(beta), int(count), int(seed)
    )


@njit(cache=True, nogil=True)
def _simulate_crossing(lambda12, n, replications, seed):
    np.random.seed(seed)
    crossings = 0
    horizon = float(n)
    for _ in range(replications):
        elapsed = 0.0
        k = 0
        while True:
            elapsed += np.random.exponential(1.0 / lambda12)
            if elapsed >= horizon:
                break
            k += 1
            # inventory n-k vs the lambda12-line at remaining time T-elapsed
            if float(n - k) < lambda12 * (horizon - elapsed):
                crossings += 1
                break
    return crossings / replications


def simulate_crossing_frequency(
    lambda12_scaled: float, n: int, replications: int, seed: int
) -> float:
    """Empirical probability that the all-accept path drops below the
    lambda12-line during a horizon of n (rescaled alpha = 1 regime)."""
    if not 0 < lambda12_scaled < 1:
        raise ValueError("requires 0 < lambda12_scaled < 1")
    return float(
        _simulate_crossing(float(lambda12_scaled), int(n), int(replications), int(seed))
    )
