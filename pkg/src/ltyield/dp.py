"""Optimal acceptance thresholds via the continuous-time value recursion.

With V(s, t) the maximal expected revenue from s units and t time remaining,

    dV(s,t)/dt = l1 * (p1 + V(s-1,t) - V(s,t))
               + l2 * max(p2 + V(s-1,t) - V(s,t), 0),   V(0,.) = V(.,0) = 0,

integrated forward in remaining time with classical RK4. The acceptance
threshold at t is the number of inventory levels whose marginal value still
exceeds the class-2 price,

    theta(t) = #{s >= 1 : V(s,t) - V(s-1,t) > p2},

so a class-2 customer is accepted iff inventory strictly exceeds theta(t);
an exact tie rejects. Compounding round-off makes direct integration
unreliable for very long horizons, hence the linear extrapolation policy
built from the threshold's slope near a cutoff time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import ModelParams
from .policies import ExtrapolatedOptimal, ThresholdTable

__all__ = ["ValueGrid", "build_eo", "compute_optimal_thresholds", "extrapolation_slope"]


@dataclass(frozen=True)
class ValueGrid:
    """Value function on a (inventory, remaining-time) grid plus extracted
    thresholds. ``values[s, k]`` is V at inventory s and time ``times[k]``;
    the time axis is decimated relative to the integration step ``dt``."""

    dt: float
    t_max: float
    max_inventory: int
    times: np.ndarray
    values: np.ndarray
    thresholds: ThresholdTable


@njit(cache=True)
def _rhs(v, out, l1, l2, p1, p2):
    out[0] = 0.0
    for s in range(1, v.shape[0]):
        margin = v[s - 1] - v[s]
        gain2 = p2 + margin
        out[s] = l1 * (p1 + margin) + l2 * (gain2 if gain2 > 0.0 else 0.0)


@njit(cache=True)
def _integrate(l1, l2, p1, p2, dt, n_steps, size, out_stride):
    v = np.zeros(size)
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    theta = np.zeros(n_steps + 1, dtype=np.int64)
    n_out = n_steps // out_stride + 1
    v_out = np.zeros((n_out, size))
    for step in range(1, n_steps + 1):
        _rhs(v, k1, l1, l2, p1, p2)
        for s in range(size):
            tmp[s] = v[s] + 0.5 * dt * k1[s]
        _rhs(tmp, k2, l1, l2, p1, p2)
        for s in range(size):
            tmp[s] = v[s] + 0.5 * dt * k2[s]
        _rhs(tmp, k3, l1, l2, p1, p2)
        for s in range(size):
            tmp[s] = v[s] + dt * k3[s]
        _rhs(tmp, k4, l1, l2, p1, p2)
        for s in range(size):
            v[s] += dt / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s])
        th = 0
        for s in range(1, size):
            if v[s] - v[s - 1] > p2:
                th += 1
            else:
                break
        theta[step] = th
        if step % out_stride == 0:
            v_out[step // out_stride] = v
    return theta, v_out


def compute_optimal_thresholds(
    params: ModelParams,
    dt: float = 1e-3,
    t_max: float = 120.0,
    max_inventory: int | None = None,
) -> ValueGrid:
    """Integrate the value recursion up to t_max and extract theta(t).

    ``max_inventory`` defaults high enough that the threshold never reaches
    the top of the grid (checked), which also makes theta independent of it.
    """
    if params.num_classes != 2:
        raise ValueError("threshold computation requires exactly two classes")
    if not 0 < dt <= 1e-2:
        raise ValueError("dt must be in (0, 1e-2] for a stable integration")
    if t_max <= 0:
        raise ValueError("t_max must be strictly positive")
    l1, l2 = params.rates
    p1, p2 = params.prices
    if max_inventory is None:
        max_inventory = int(math.ceil((l1 + l2) * t_max)) + 10
    if max_inventory < 2:
        raise ValueError("max_inventory must be >= 2")
    n_steps = int(round(t_max / dt))
    out_stride = max(1, n_steps // 1000)
    theta_steps, v_out = _integrate(
        l1, l2, p1, p2, dt, n_steps, max_inventory + 1, out_stride
    )

    if np.any(np.diff(theta_steps) < 0):
        raise RuntimeError("threshold not monotone: integration unstable, reduce dt")
    if theta_steps[-1] >= max_inventory:
        raise RuntimeError("threshold reached the inventory grid top; raise max_inventory")
    delta = np.diff(v_out, axis=1)
    if delta.min() < -1e-9 or np.any(np.diff(delta, axis=1) > 1e-9):
        raise RuntimeError("value function lost monotonicity/concavity; reduce dt")

    jumps = np.flatnonzero(np.diff(theta_steps) > 0) + 1
    breakpoints = np.concatenate(([0.0], jumps * dt))
    values = np.concatenate(([0], theta_steps[jumps])).astype(np.int64)
    table = ThresholdTable(breakpoints, values)
    times = np.arange(v_out.shape[0]) * (out_stride * dt)
    return ValueGrid(
        dt=dt,
        t_max=n_steps * dt,
        max_inventory=max_inventory,
        times=times,
        values=v_out.T.copy(),
        thresholds=table,
    )


def extrapolation_slope(grid: ValueGrid, t_cut: float, window_fraction: float = 0.2) -> float:
    """Least-squares slope of the threshold breakpoints over
    [(1 - window_fraction) * t_cut, t_cut]."""
    if not 0 < t_cut <= grid.t_max:
        raise ValueError(f"t_cut must lie in (0, {grid.t_max}]")
    table = grid.thresholds
    lo = (1.0 - window_fraction) * t_cut
    mask = (table.breakpoints >= lo) & (table.breakpoints <= t_cut)
    if int(mask.sum()) < 3:
        raise ValueError(
            f"only {int(mask.sum())} threshold breakpoints in [{lo}, {t_cut}]; "
            "need at least 3 to fit a slope"
        )
    slope = float(np.polyfit(table.breakpoints[mask], table.values[mask].astype(float), 1)[0])
    if slope <= 0:
        raise ValueError("fitted slope is not positive")
    return slope


def build_eo(grid: ValueGrid, t_cut: float) -> ExtrapolatedOptimal:
    """Exact thresholds up to t_cut, fitted linear continuation beyond."""
    slope = extrapolation_slope(grid, t_cut)
    base = grid.thresholds.restrict(t_cut)
    return ExtrapolatedOptimal(base=base, slope=slope, t_cut=float(t_cut))
