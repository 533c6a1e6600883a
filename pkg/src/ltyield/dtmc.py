"""Discrete-time Markov chain of the line-relative inventory position.

All chain work is done after rescaling the guiding slope to 1 (rates divided
by beta), observing the path at integer remaining times. The state is the
integer gap between the path and the line. One-step transition probabilities,
with f the Poisson pmf, f+ its upper tail, and h the Erlang density:

* from i >= 0 up to j in {1..i+1}:   q(i,j) = f(lambda12, i-j+1)
* from i <= -1 to j <= i+1:          q(i,j) = f(lambda1, i-j+1)
* from i >= 0 down to j <= 0:
      q(i,j) = integral_0^1 h(i+1, lambda12, u) f((1-u) lambda1, -j) du
  evaluated with fixed-order Gauss-Legendre quadrature (order fixed for
  reproducibility; entire integrand, so 64 nodes reach ~1e-15 absolute).

The chain restricted to the non-negative states is the arrival-time chain of
a D/M/1 queue; restricted to the non-positive states it is the departure-time
chain of an M/D/1 queue whose first job after each idle period is partial,
with size density g estimated empirically from simulated excursions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammainc, gammaln

from .excursion import simulate_excursions

__all__ = [
    "DtmcModel",
    "GHistogram",
    "StationaryDist",
    "dm1_arrival_matrix",
    "erlang_pdf",
    "estimate_g",
    "kernel_entry",
    "md1_departure_matrix",
    "poisson_pmf",
    "poisson_tail",
    "proposition1_bound",
    "restricted_minus_kernel",
    "restricted_plus_kernel",
    "row_mass_outside",
    "simulate_chain",
    "simulate_chain_finals",
    "stationary",
]


# --------------------------------------------------------------------------
# special functions
# --------------------------------------------------------------------------


def poisson_pmf(x: float, y: int) -> float:
    """P(Poisson(x) = y), evaluated in log space for large means."""
    if x < 0:
        raise ValueError("mean must be non-negative")
    if y < 0 or y != int(y):
        raise ValueError("y must be a non-negative integer")
    if x == 0:
        return 1.0 if y == 0 else 0.0
    if y == 0:
        return math.exp(-x)
    return math.exp(-x + y * math.log(x) - gammaln(y + 1))


def poisson_tail(x: float, y: int) -> float:
    """P(Poisson(x) >= y)."""
    if x < 0:
        raise ValueError("mean must be non-negative")
    if y < 0 or y != int(y):
        raise ValueError("y must be a non-negative integer")
    if y == 0:
        return 1.0
    if x == 0:
        return 0.0
    return float(gammainc(y, x))


def erlang_pdf(w: int, x: float, y: float) -> float:
    """Density at y of an Erlang with integer shape w >= 1 and rate x > 0."""
    if w < 1 or w != int(w):
        raise ValueError("shape must be a positive integer")
    if x <= 0:
        raise ValueError("rate must be strictly positive")
    if y < 0:
        raise ValueError("y must be non-negative")
    if y == 0:
        return x if w == 1 else 0.0
    return math.exp(w * math.log(x) + (w - 1) * math.log(y) - x * y - gammaln(w))


def _pmf_array(x: float, kmax: int) -> np.ndarray:
    """f(x, k) for k = 0..kmax via the stable multiplicative recurrence."""
    out = np.empty(kmax + 1)
    out[0] = math.exp(-x)
    for k in range(1, kmax + 1):
        out[k] = out[k - 1] * x / k
    return out


# --------------------------------------------------------------------------
# model assembly
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DtmcModel:
    """Transition kernel on states -M..M after rescaling the slope to 1.

    ``matrix[M+i, M+j]`` holds the exact formula value q(i, j); transition
    mass leaving the truncation window is *not* folded here (see
    ``row_mass_outside`` and ``stationary``).
    """

    lambda1: float
    lambda2: float
    truncation: int
    quadrature_nodes: int
    matrix: np.ndarray
    _h_weights: np.ndarray
    _u_nodes: np.ndarray

    @classmethod
    def build(
        cls,
        lambda1: float,
        lambda2: float,
        beta: float = 1.0,
        truncation: int = 400,
        quadrature_nodes: int = 64,
    ) -> "DtmcModel":
        """Assemble the kernel from raw rates and a slope (rescaled internally)."""
        if lambda1 <= 0 or lambda2 <= 0 or beta <= 0:
            raise ValueError("rates and beta must be strictly positive")
        if truncation < 2:
            raise ValueError("truncation must be >= 2")
        if quadrature_nodes < 8:
            raise ValueError("quadrature_nodes must be >= 8")
        l1 = lambda1 / beta
        l2 = lambda2 / beta
        l12 = l1 + l2
        m = truncation
        dim = 2 * m + 1
        pmf12 = _pmf_array(l12, 2 * m + 2)
        pmf1 = _pmf_array(l1, 2 * m + 2)

        mat = np.zeros((dim, dim))
        # upward moves from i >= 0 (includes the no-arrival step i -> i+1)
        for i in range(0, m + 1):
            jmax = min(i + 1, m)
            mat[m + i, m + 1 : m + 1 + jmax] = pmf12[i + 1 - jmax : i + 1][::-1]
        # moves from below the line: only class-1 arrivals count
        for i in range(-m, 0):
            mat[m + i, 0 : i + m + 2] = pmf1[0 : i + m + 2][::-1]
        # crossing moves i >= 0 -> j <= 0 via the Erlang-weighted quadrature
        nodes, weights = np.polynomial.legendre.leggauss(quadrature_nodes)
        u = 0.5 * (nodes + 1.0)
        w = 0.5 * weights
        shapes = np.arange(1, m + 2)
        log_h = (
            shapes[:, None] * math.log(l12)
            + (shapes[:, None] - 1) * np.log(u)[None, :]
            - l12 * u[None, :]
            - gammaln(shapes)[:, None]
        )
        h_weighted = np.exp(log_h) * w[None, :]
        x = (1.0 - u) * l1
        ms = np.arange(0, m + 1)
        log_f = -x[:, None] + ms[None, :] * np.log(x)[:, None] - gammaln(ms + 1)[None, :]
        cross = h_weighted @ np.exp(log_f)
        mat[m:, 0 : m + 1] = cross[:, ::-1]

        mat.setflags(write=False)
        return cls(
            lambda1=l1,
            lambda2=l2,
            truncation=m,
            quadrature_nodes=quadrature_nodes,
            matrix=mat,
            _h_weights=h_weighted,
            _u_nodes=u,
        )

    @property
    def lambda12(self) -> float:
        return self.lambda1 + self.lambda2

    @property
    def states(self) -> np.ndarray:
        return np.arange(-self.truncation, self.truncation + 1)

    def index(self, state: int) -> int:
        if abs(state) > self.truncation:
            raise ValueError(f"state {state} outside truncation +-{self.truncation}")
        return state + self.truncation


def kernel_entry(model: DtmcModel, i: int, j: int) -> float:
    """Exact transition probability q(i, j) for states inside the truncation."""
    return float(model.matrix[model.index(i), model.index(j)])


def row_mass_outside(model: DtmcModel, i: int) -> float:
    """Transition mass from state i to states beyond the truncation window."""
    m = model.truncation
    idx = model.index(i)
    mass = 0.0
    if i >= 0:
        # deep drops below -M, integrated over the crossing time
        tails = gammainc(m + 1, (1.0 - model._u_nodes) * model.lambda1)
        mass += float(model._h_weights[i] @ tails)
        if i == m:
            mass += poisson_pmf(model.lambda12, 0)  # the step to M+1
    else:
        mass += poisson_tail(model.lambda1, i + m + 2)
    del idx
    return mass


# --------------------------------------------------------------------------
# stationary distribution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StationaryDist:
    """Stationary distribution on the truncated state space."""

    states: np.ndarray
    probs: np.ndarray
    residual: float

    def __post_init__(self):
        self.states.setflags(write=False)
        self.probs.setflags(write=False)

    @property
    def pi0(self) -> float:
        return float(self.probs[self.states.size // 2])

    @property
    def first_moment_abs(self) -> float:
        return float(np.abs(self.states) @ self.probs)

    def as_dict(self) -> dict[int, float]:
        return {int(s): float(p) for s, p in zip(self.states, self.probs)}


def _folded_matrix(model: DtmcModel) -> np.ndarray:
    """Stochastic truncation: mass leaving the window sticks to the boundary."""
    m = model.truncation
    fold = model.matrix.copy()
    for i in range(-m, m + 1):
        extra = row_mass_outside(model, i)
        if i == m:
            up = poisson_pmf(model.lambda12, 0)
            fold[model.index(i), model.index(m)] += up
            extra -= up
        fold[model.index(i), 0] += extra
    fold /= fold.sum(axis=1, keepdims=True)
    return fold


def _gth(p: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination; subtraction-free, so the result
    is componentwise positive for an irreducible chain."""
    a = p.copy()
    dim = a.shape[0]
    for n in range(dim - 1, 0, -1):
        s = a[n, :n].sum()
        a[n, :n] /= s
        a[:n, :n] += np.outer(a[:n, n], a[n, :n])
    pi = np.zeros(dim)
    pi[0] = 1.0
    for n in range(1, dim):
        pi[n] = pi[:n] @ a[:n, n]
    return pi / pi.sum()


def stationary(
    model: DtmcModel, tol: float = 1e-10, max_iterations: int = 1_000_000
) -> StationaryDist:
    """Solve pi P = pi on the folded truncated kernel.

    Power iteration with guarded Aitken extrapolation; falls back to a dense
    GTH solve if the iteration stalls. Requires the positive-recurrence
    condition lambda1 < 1 < lambda12 in rescaled rates.
    """
    if not (model.lambda1 < 1.0 < model.lambda12):
        raise ValueError(
            "positive recurrence requires lambda1 < beta < lambda1 + lambda2 "
            f"(rescaled: lambda1={model.lambda1}, lambda12={model.lambda12})"
        )
    p = _folded_matrix(model)
    dim = p.shape[0]
    v = np.full(dim, 1.0 / dim)
    prev = [v]
    converged = False
    iterations = 0
    while iterations < max_iterations:
        v_next = v @ p
        iterations += 1
        residual = float(np.abs(v_next - v).sum())
        if residual <= tol:
            v = v_next
            converged = True
            break
        prev.append(v_next)
        if len(prev) == 3:
            v0, v1, v2 = prev
            denom = v2 - 2.0 * v1 + v0
            safe = np.abs(denom) > 1e-300
            acc = v2.copy()
            acc[safe] -= (v2[safe] - v1[safe]) ** 2 / denom[safe]
            if acc.min() >= 0.0 and acc.sum() > 0:
                acc /= acc.sum()
                if float(np.abs(acc @ p - acc).sum()) < residual:
                    v_next = acc
            prev = [v_next]
        v = v_next
    if not converged:
        if dim <= 2001:
            v = _gth(p)
        else:
            raise RuntimeError(
                "stationary solve did not converge; retry with a larger "
                "truncation or more iterations"
            )
    v = v / v.sum()
    residual = float(np.abs(v @ p - v).sum())
    if residual > 1e-8:
        raise RuntimeError(
            f"stationary residual {residual:.3e} above 1e-8; increase truncation"
        )
    return StationaryDist(states=model.states.copy(), probs=v, residual=residual)


def proposition1_bound(dist: StationaryDist) -> float:
    """Uniform-in-horizon bound on E|position at the end| from a start on the
    line: (sum_i |i| pi_i) / pi_0."""
    return dist.first_moment_abs / dist.pi0


# --------------------------------------------------------------------------
# restricted chains
# --------------------------------------------------------------------------


def restricted_plus_kernel(model: DtmcModel) -> np.ndarray:
    """Chain watched only on states >= 0; row/col r is state r.

    Entries for j >= 1 are copied from the full kernel; the collapsed return
    q+(i, 0) is the tail f+(lambda12, i+1). The last row leaks f(lambda12, 0)
    of mass to state M+1, outside the window.
    """
    m = model.truncation
    out = np.zeros((m + 1, m + 1))
    out[:, 1:] = model.matrix[m:, m + 1 :]
    for i in range(m + 1):
        out[i, 0] = poisson_tail(model.lambda12, i + 1)
    return out


def dm1_arrival_matrix(lambda12: float, size: int) -> np.ndarray:
    """Arrival-time chain of a D/M/1 queue with unit inter-arrival times and
    service rate lambda12, built directly from b_l = exp(-lambda12) lambda12^l / l!."""
    b = _pmf_array(lambda12, size + 1)
    out = np.zeros((size, size))
    for i in range(size):
        jmax = min(i + 1, size - 1)
        out[i, 1 : 1 + jmax] = b[i + 1 - jmax : i + 1][::-1]
        out[i, 0] = 1.0 - b[: i + 1].sum()
    return out


def md1_departure_matrix(lambda1: float, size: int) -> np.ndarray:
    """Departure-time chain of an M/D/1 queue with arrival rate lambda1 and
    unit service times; row/col r is the job count r."""
    f = _pmf_array(lambda1, size + 1)
    out = np.zeros((size, size))
    out[0, :] = f[:size]
    for i in range(1, size):
        out[i, i - 1 :] = f[: size - i + 1]
    return out


@dataclass(frozen=True)
class GHistogram:
    """Histogram density on [0, 1] of the fractional gap ceil(A) - A, where A
    is an excursion's time above the line."""

    bin_edges: np.ndarray
    weights: np.ndarray
    samples: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "weights", weights)
        if edges.size != weights.size + 1:
            raise ValueError("need len(bin_edges) == len(weights) + 1")
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must increase from 0 to 1")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must form a probability density over the bins")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def estimate_g(model: DtmcModel, count: int = 100_000, bins: int = 64, seed: int = 0) -> GHistogram:
    """Empirical g from simulated excursions at the model's rescaled rates."""
    above, _ = simulate_excursions(model.lambda1, model.lambda2, 1.0, count, seed)
    frac = np.ceil(above) - above
    counts, edges = np.histogram(frac, bins=bins, range=(0.0, 1.0))
    return GHistogram(bin_edges=edges, weights=counts / count, samples=count)


def restricted_minus_kernel(model: DtmcModel, g_estimate: GHistogram) -> np.ndarray:
    """Chain watched only on states <= 0; row/col r is state -r.

    Rows r >= 1 are the exact below-line kernel entries f(lambda1, l - r + 1).
    Row 0 needs the crossing-offset density g and is integrated against the
    supplied histogram. Rows near the truncation edge leak deep-drop mass.
    """
    if not isinstance(g_estimate, GHistogram):
        raise TypeError("g_estimate must be a GHistogram density")
    m = model.truncation
    out = np.zeros((m + 1, m + 1))
    centers = g_estimate.centers
    ls = np.arange(0, m + 1)
    x = centers * model.lambda1
    log_f = -x[:, None] + ls[None, :] * np.log(x)[:, None] - gammaln(ls + 1)[None, :]
    out[0, :] = g_estimate.weights @ np.exp(log_f)
    pmf1 = _pmf_array(model.lambda1, m + 2)
    for r in range(1, m + 1):
        out[r, r - 1 :] = pmf1[: m - r + 2]
    return out


# --------------------------------------------------------------------------
# direct simulation of the chain (independent of the kernel formulas)
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _chain_trajectory(l1, l12, x0, steps, seed):
    np.random.seed(seed)
    out = np.empty(steps, dtype=np.int64)
    x = x0
    for k in range(steps):
        u = 0.0
        accepted = 0
        while True:
            pos = x + u - accepted
            rate = l12 if pos >= 0.0 else l1
            gap = np.random.exponential(1.0 / rate)
            if u + gap >= 1.0:
                break
            u += gap
            accepted += 1
        x = x + 1 - accepted
        out[k] = x
    return out


@njit(cache=True, nogil=True)
def _chain_finals(l1, l12, x0, steps, replications, seed):
    np.random.seed(seed)
    out = np.empty(replications, dtype=np.int64)
    for r in range(replications):
        x = x0
        for _ in range(steps):
            u = 0.0
            accepted = 0
            while True:
                pos = x + u - accepted
                rate = l12 if pos >= 0.0 else l1
                gap = np.random.exponential(1.0 / rate)
                if u + gap >= 1.0:
                    break
                u += gap
                accepted += 1
            x = x + 1 - accepted
        out[r] = x
    return out


def simulate_chain(model: DtmcModel, x0: int, steps: int, seed: int) -> np.ndarray:
    """Simulate the unbounded chain through its continuous-time dynamics.

    This never touches the kernel formulas: within each unit interval the
    path drifts up at rate 1 and drops by one at each accepted arrival
    (merged rate at or above the line, class-1 rate below), so it serves as
    an independent oracle for the kernel and its stationary distribution.
    """
    return _chain_trajectory(model.lambda1, model.lambda12, int(x0), int(steps), int(seed))


def simulate_chain_finals(
    model: DtmcModel, x0: int, steps: int, replications: int, seed: int
) -> np.ndarray:
    """Final states of many independent chain runs of a fixed length."""
    return _chain_finals(
        model.lambda1, model.lambda12, int(x0), int(steps), int(replications), int(seed)
    )
