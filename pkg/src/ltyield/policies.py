"""Acceptance policies executed event-by-event over an arrival realization.

Two deliberately different comparisons are used:

* linear-threshold policies accept the marginal class iff inventory is at
  least ``beta * t`` (closed comparison, "on the line" accepts);
* table policies accept iff inventory strictly exceeds ``theta(t)``.

Inventory positions may go negative after a stockout: each rejected class-1
customer then decrements the final inventory position by one (rejections of
other classes after stockout are not counted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from .model import ArrivalRealization, ModelParams

__all__ = [
    "AcceptAll",
    "BetaLT",
    "ExtrapolatedOptimal",
    "PolicySpec",
    "SimOutcome",
    "ThresholdTable",
    "VectorBetaLT",
    "run_accept_all",
    "run_beta_lt",
    "run_policy",
    "run_threshold_table",
    "run_vector_beta_lt",
]


# --------------------------------------------------------------------------
# policy descriptions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaLT:
    """Two-class linear threshold policy with slope beta.

    Any beta > 0 is executable; the bounded-regret guarantees only cover
    lambda_1 < beta < lambda_1 + lambda_2, which `in_guarantee_range` reports.
    """

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be strictly positive")

    def in_guarantee_range(self, params: ModelParams) -> bool:
        return params.rates[0] < self.beta < params.total_rate


@dataclass(frozen=True)
class VectorBetaLT:
    """K-class policy guided by K-1 increasing slopes beta_1 < ... < beta_{K-1}."""

    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.betas) < 1:
            raise ValueError("at least one slope is required")
        if any(b <= 0 for b in self.betas):
            raise ValueError("slopes must be strictly positive")
        if any(a >= b for a, b in zip(self.betas, self.betas[1:])):
            raise ValueError("slopes must be strictly increasing")

    def validate_rates(self, params: ModelParams) -> None:
        """Enforce cum(lambda_1..j) < beta_j < cum(lambda_1..j+1) for each j."""
        if len(self.betas) != params.num_classes - 1:
            raise ValueError(
                f"{params.num_classes} classes require {params.num_classes - 1} slopes, "
                f"got {len(self.betas)}"
            )
        cum = np.cumsum(params.rates)
        for j, beta in enumerate(self.betas, start=1):
            if not cum[j - 1] < beta < cum[j]:
                raise ValueError(
                    f"beta_{j}={beta} infeasible: must lie in ({cum[j-1]}, {cum[j]})"
                )


@dataclass(frozen=True)
class ThresholdTable:
    """Non-decreasing step function theta(t) = values[k] for t in [breakpoints[k], breakpoints[k+1])."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if bp.size == 0 or bp.size != vals.size:
            raise ValueError("breakpoints and values must be non-empty and equal length")
        if bp[0] != 0.0:
            raise ValueError("first breakpoint must be 0.0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(vals < 0):
            raise ValueError("threshold values must be non-negative integers")
        if np.any(np.diff(vals) < 0):
            raise ValueError("threshold values must be non-decreasing in remaining time")
        bp.setflags(write=False)
        vals.setflags(write=False)

    def theta(self, t: float) -> int:
        if t < 0:
            raise ValueError("t must be non-negative")
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return int(self.values[k])

    def restrict(self, t_max: float) -> "ThresholdTable":
        keep = self.breakpoints <= t_max
        return ThresholdTable(self.breakpoints[keep].copy(), self.values[keep].copy())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t_breakpoint,theta_value\n")
            for t, v in zip(self.breakpoints, self.values):
                fh.write(f"{t:.17g},{v:d}\n")

    @classmethod
    def from_csv(cls, path) -> "ThresholdTable":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.size == 0:
            raise ValueError(f"{path}: empty threshold table")
        return cls(rows[:, 0].copy(), rows[:, 1].astype(np.int64))


@dataclass(frozen=True)
class AcceptAll:
    """Accept every arrival while inventory remains."""


@dataclass(frozen=True)
class ExtrapolatedOptimal:
    """Exact threshold table up to t_cut, linear continuation beyond.

    For t > t_cut the threshold is floor(theta(t_cut) + slope * (t - t_cut)).
    """

    base: ThresholdTable
    slope: float
    t_cut: float

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("slope must be strictly positive")
        if not self.t_cut > 0:
            raise ValueError("t_cut must be strictly positive")
        if self.base.breakpoints[-1] > self.t_cut:
            raise ValueError("base table extends past t_cut")

    def theta(self, t: float) -> int:
        if t <= self.t_cut:
            return self.base.theta(t)
        return int(math.floor(self.base.theta(self.t_cut) + self.slope * (t - self.t_cut)))


PolicySpec = Union[BetaLT, VectorBetaLT, ThresholdTable, AcceptAll, ExtrapolatedOptimal]


@dataclass(frozen=True)
class SimOutcome:
    """Per-realization result of a policy run.

    ``final_inventory_position`` is the leftover inventory when positive, or
    minus the number of class-1 customers rejected after stockout otherwise.
    ``crossed_beta_line`` / ``first_cross_time`` report the first remaining
    time at which the sample path touched or jumped across its guiding line
    (always False/None for table policies, which have no guiding line).
    """

    revenue: float
    accepted_per_class: np.ndarray
    final_inventory_position: int
    crossed_beta_line: bool
    first_cross_time: float | None


# --------------------------------------------------------------------------
# event-loop kernels
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _beta_lt_kernel(times, classes, n, beta, horizon):
    s = n
    acc1 = 0
    acc2 = 0
    rej1 = 0
    r0 = float(n) - beta * horizon
    started_above = r0 > 0.0
    crossed = r0 == 0.0
    cross_t = horizon if crossed else -1.0
    for idx in range(times.shape[0]):
        t = times[idx]
        if not crossed and not started_above and s > 0 and float(s) >= beta * t:
            # line decayed down to the path between events
            crossed = True
            cross_t = float(s) / beta
        c = classes[idx]
        if c == 1:
            if s > 0:
                s -= 1
                acc1 += 1
            else:
                rej1 += 1
        else:
            if s > 0 and float(s) >= beta * t:
                s -= 1
                acc2 += 1
        if not crossed and started_above and float(s) - beta * t <= 0.0:
            crossed = True
            cross_t = t
    if not crossed and not started_above and s > 0:
        crossed = True
        cross_t = float(s) / beta
    pos = s if s > 0 else -rej1
    return acc1, acc2, rej1, crossed, cross_t, pos


@njit(cache=True, nogil=True)
def _threshold_kernel(times, classes, n, bp_t, bp_v, has_extrap, slope, t_cut, theta_cut):
    s = n
    acc1 = 0
    acc2 = 0
    rej1 = 0
    for idx in range(times.shape[0]):
        t = times[idx]
        c = classes[idx]
        if c == 1:
            if s > 0:
                s -= 1
                acc1 += 1
            else:
                rej1 += 1
        else:
            if has_extrap and t > t_cut:
                th = math.floor(theta_cut + slope * (t - t_cut))
            else:
                k = np.searchsorted(bp_t, t, side="right") - 1
                th = float(bp_v[k])
            if s > 0 and float(s) > th:
                s -= 1
                acc2 += 1
    pos = s if s > 0 else -rej1
    return acc1, acc2, rej1, pos


@njit(cache=True, nogil=True)
def _accept_all_kernel(times, classes, n, num_classes):
    acc = np.zeros(num_classes, dtype=np.int64)
    s = n
    rej1 = 0
    for idx in range(times.shape[0]):
        c = classes[idx]
        if s > 0:
            s -= 1
            acc[c - 1] += 1
        elif c == 1:
            rej1 += 1
    pos = s if s > 0 else -rej1
    return acc, pos


@njit(cache=True, nogil=True)
def _vector_lt_kernel(times, classes, n, betas, horizon):
    # modes: 0 = cone (accept 1..kcone), 1 = below-all-lines pre-phase,
    # 2 = above-all-lines pre-phase, 3 = settled two-class regime
    num_classes = betas.shape[0] + 1
    acc = np.zeros(num_classes, dtype=np.int64)
    s = n
    rej1 = 0
    crossed = False
    cross_t = -1.0
    top = 0
    marg = 0
    line = 0.0
    kcone = 0
    nf = float(n)
    if nf < betas[0] * horizon:
        mode = 1
    elif nf > betas[num_classes - 2] * horizon:
        mode = 2
    else:
        kc = 2
        while nf > betas[kc - 1] * horizon:
            kc += 1
        if nf <= betas[kc - 2] * horizon:
            # starts on/below the lower cone boundary: settle immediately
            mode = 3
            top = kc - 1
            marg = kc
            line = betas[kc - 2]
            crossed = True
            cross_t = horizon
        elif nf >= betas[kc - 1] * horizon:
            mode = 3
            top = kc
            marg = kc + 1
            line = betas[kc - 1]
            crossed = True
            cross_t = horizon
        else:
            mode = 0
            kcone = kc
    for idx in range(times.shape[0]):
        t = times[idx]
        c = classes[idx]
        # continuous triggers between the previous point and this event
        if mode == 0:
            if float(s) >= betas[kcone - 1] * t:
                # the upper cone line decayed down to the path: exited above
                mode = 3
                top = kcone
                marg = kcone + 1
                line = betas[kcone - 1]
                crossed = True
                cross_t = float(s) / betas[kcone - 1]
        elif mode == 1:
            if s > 0 and float(s) >= betas[0] * t:
                mode = 3
                top = 1
                marg = 2
                line = betas[0]
                crossed = True
                cross_t = float(s) / betas[0]
        # process the event under the (possibly updated) mode
        if mode == 0:
            if c <= kcone:
                if s > 0:
                    s -= 1
                    acc[c - 1] += 1
                    if float(s) <= betas[kcone - 2] * t:
                        # jumped onto/below the lower cone line: exited below
                        mode = 3
                        top = kcone - 1
                        marg = kcone
                        line = betas[kcone - 2]
                        crossed = True
                        cross_t = t
                elif c == 1:
                    rej1 += 1
        elif mode == 1:
            if c == 1:
                if s > 0:
                    s -= 1
                    acc[0] += 1
                else:
                    rej1 += 1
        elif mode == 2:
            if s > 0:
                s -= 1
                acc[c - 1] += 1
                if float(s) <= betas[num_classes - 2] * t:
                    mode = 3
                    top = num_classes - 1
                    marg = num_classes
                    line = betas[num_classes - 2]
                    crossed = True
                    cross_t = t
            elif c == 1:
                rej1 += 1
        else:
            if c <= top:
                if s > 0:
                    s -= 1
                    acc[c - 1] += 1
                elif c == 1:
                    rej1 += 1
            elif c == marg:
                if s > 0 and float(s) >= line * t:
                    s -= 1
                    acc[c - 1] += 1
    # continuous triggers after the last event (diagnostics only)
    if mode == 0 and s > 0:
        crossed = True
        cross_t = float(s) / betas[kcone - 1]
    elif mode == 1 and s > 0:
        crossed = True
        cross_t = float(s) / betas[0]
    pos = s if s > 0 else -rej1
    return acc, rej1, crossed, cross_t, pos


# --------------------------------------------------------------------------
# public runners
# --------------------------------------------------------------------------


def _check_realization(params: ModelParams, realization: ArrivalRealization) -> None:
    if realization.num_classes != params.num_classes:
        raise ValueError("realization class count does not match params")


def _revenue(accepted: np.ndarray, params: ModelParams) -> float:
    return float(np.dot(accepted, np.asarray(params.prices)))


def run_beta_lt(params: ModelParams, beta: float, realization: ArrivalRealization) -> SimOutcome:
    """Execute the two-class linear threshold policy with slope beta."""
    if params.num_classes != 2:
        raise ValueError("run_beta_lt requires exactly two classes")
    if not beta > 0:
        raise ValueError("beta must be strictly positive")
    _check_realization(params, realization)
    acc1, acc2, _, crossed, cross_t, pos = _beta_lt_kernel(
        realization.remaining_times,
        realization.class_indices,
        params.initial_inventory,
        float(beta),
        float(params.horizon),
    )
    accepted = np.array([acc1, acc2], dtype=np.int64)
    return SimOutcome(
        revenue=_revenue(accepted, params),
        accepted_per_class=accepted,
        final_inventory_position=int(pos),
        crossed_beta_line=bool(crossed),
        first_cross_time=float(cross_t) if crossed else None,
    )


def run_threshold_table(
    params: ModelParams,
    table: ThresholdTable | ExtrapolatedOptimal,
    realization: ArrivalRealization,
) -> SimOutcome:
    """Execute a two-class threshold-table (or extrapolated) policy."""
    if params.num_classes != 2:
        raise ValueError("run_threshold_table requires exactly two classes")
    _check_realization(params, realization)
    if isinstance(table, ExtrapolatedOptimal):
        base = table.base
        has_extrap = True
        slope = float(table.slope)
        t_cut = float(table.t_cut)
        theta_cut = float(base.theta(t_cut))
    else:
        base = table
        has_extrap = False
        slope = 0.0
        t_cut = math.inf
        theta_cut = 0.0
    acc1, acc2, _, pos = _threshold_kernel(
        realization.remaining_times,
        realization.class_indices,
        params.initial_inventory,
        base.breakpoints,
        base.values,
        has_extrap,
        slope,
        t_cut,
        theta_cut,
    )
    accepted = np.array([acc1, acc2], dtype=np.int64)
    return SimOutcome(
        revenue=_revenue(accepted, params),
        accepted_per_class=accepted,
        final_inventory_position=int(pos),
        crossed_beta_line=False,
        first_cross_time=None,
    )


def run_accept_all(params: ModelParams, realization: ArrivalRealization) -> SimOutcome:
    _check_realization(params, realization)
    accepted, pos = _accept_all_kernel(
        realization.remaining_times,
        realization.class_indices,
        params.initial_inventory,
        params.num_classes,
    )
    return SimOutcome(
        revenue=_revenue(accepted, params),
        accepted_per_class=accepted,
        final_inventory_position=int(pos),
        crossed_beta_line=False,
        first_cross_time=None,
    )


def run_vector_beta_lt(
    params: ModelParams, betas, realization: ArrivalRealization
) -> SimOutcome:
    """Execute the K-class vector linear threshold policy.

    The regime is selected from alpha = n/T: inside the cone between two
    adjacent lines, accept the top classes until the path leaves the cone;
    below all lines, accept only class 1 until the lowest line is reached;
    above all lines, accept everyone until the highest line is reached. In
    every case the policy then settles into a two-class regime against the
    line that was hit. When alpha sits exactly on a line, the settled regime
    against that line applies from the start.
    """
    spec = betas if isinstance(betas, VectorBetaLT) else VectorBetaLT(tuple(betas))
    spec.validate_rates(params)
    _check_realization(params, realization)
    if params.num_classes == 2:
        # one slope: identical to the plain two-class policy in every regime
        return run_beta_lt(params, spec.betas[0], realization)
    acc, _, crossed, cross_t, pos = _vector_lt_kernel(
        realization.remaining_times,
        realization.class_indices,
        params.initial_inventory,
        np.asarray(spec.betas, dtype=np.float64),
        float(params.horizon),
    )
    return SimOutcome(
        revenue=_revenue(acc, params),
        accepted_per_class=acc,
        final_inventory_position=int(pos),
        crossed_beta_line=bool(crossed),
        first_cross_time=float(cross_t) if crossed else None,
    )


def run_policy(params: ModelParams, spec: PolicySpec, realization: ArrivalRealization) -> SimOutcome:
    if isinstance(spec, BetaLT):
        return run_beta_lt(params, spec.beta, realization)
    if isinstance(spec, VectorBetaLT):
        return run_vector_beta_lt(params, spec, realization)
    if isinstance(spec, (ThresholdTable, ExtrapolatedOptimal)):
        return run_threshold_table(params, spec, realization)
    if isinstance(spec, AcceptAll):
        return run_accept_all(params, realization)
    raise TypeError(f"unknown policy spec: {spec!r}")
