"""Monte Carlo regret estimation with common random numbers.

Each replication i draws its stream statelessly from (master_seed, i), so a
cell's estimate never depends on evaluation order or thread count, and cells
sharing the same (rates, horizon) see identical streams. Per-replication
values are stored by index and reduced in fixed order, which makes results
bitwise reproducible under any parallelism degree.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from .hindsight import hindsight_optimal
from .model import ModelParams, SeedSpec, sample_arrivals
from .policies import BetaLT, PolicySpec, run_policy

__all__ = [
    "RegretEstimate",
    "SweepCell",
    "SweepGrid",
    "estimate_regret",
    "parse_table",
    "run_sweep",
    "tabulate",
]

# absolute slack for the per-replication dominance check
_DOMINANCE_TOL = 1e-9


@dataclass(frozen=True)
class RegretEstimate:
    mean_regret: float
    std_error: float
    replications: int
    mean_hindsight: float
    mean_policy_revenue: float
    mean_abs_final_position: float


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian experiment grid over (beta, horizon, alpha) cells.

    Every cell reuses the replication stream family (master_seed, 0..reps-1);
    cells with equal horizons therefore see identical arrival streams. Cell
    inventory is n = round(alpha * T).
    """

    betas: tuple[float, ...]
    horizons: tuple[float, ...]
    alphas: tuple[float, ...]
    rates: tuple[float, ...]
    prices: tuple[float, ...]
    replications: int
    master_seed: int
    policy_kind: str = "beta_lt"

    def __post_init__(self):
        for name in ("betas", "horizons", "alphas"):
            axis = getattr(self, name)
            object.__setattr__(self, name, tuple(float(v) for v in axis))
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} axis must be non-empty")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.policy_kind != "beta_lt":
            raise ValueError(f"unsupported sweep policy kind: {self.policy_kind}")


@dataclass(frozen=True)
class SweepCell:
    beta: float
    horizon: float
    alpha: float
    n: int
    replications: int
    mean_regret: float
    std_error: float
    mean_hindsight: float
    mean_policy_revenue: float
    mean_abs_final_position: float


def _cell_inventory(alpha: float, horizon: float) -> int:
    return int(round(alpha * horizon))


def _chunks(total: int, workers: int):
    step = max(1, math.ceil(total / workers))
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def _aggregate(regret, ho, rev, abspos, replications) -> RegretEstimate:
    if np.any(rev > ho + _DOMINANCE_TOL):
        worst = int(np.argmax(rev - ho))
        raise RuntimeError(
            f"hindsight dominance violated at replication {worst}: "
            f"policy {rev[worst]} > hindsight {ho[worst]}"
        )
    std_error = float(np.std(regret, ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return RegretEstimate(
        mean_regret=float(np.mean(regret)),
        std_error=std_error,
        replications=replications,
        mean_hindsight=float(np.mean(ho)),
        mean_policy_revenue=float(np.mean(rev)),
        mean_abs_final_position=float(np.mean(abspos)),
    )


def estimate_regret(
    params: ModelParams,
    spec: PolicySpec,
    replications: int,
    master_seed: int,
    threads: int = 1,
) -> RegretEstimate:
    """Mean regret of a policy against the hindsight oracle over seeded streams."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    regret = np.empty(replications)
    ho = np.empty(replications)
    rev = np.empty(replications)
    abspos = np.empty(replications)

    def run_range(bounds):
        lo, hi = bounds
        for i in range(lo, hi):
            realization = sample_arrivals(params, SeedSpec(master_seed, i))
            out = run_policy(params, spec, realization)
            opt = hindsight_optimal(params, realization)
            ho[i] = opt.revenue
            rev[i] = out.revenue
            regret[i] = opt.revenue - out.revenue
            abspos[i] = abs(out.final_inventory_position)

    if threads <= 1:
        run_range((0, replications))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_range, _chunks(replications, threads)))
    return _aggregate(regret, ho, rev, abspos, replications)


def run_sweep(grid: SweepGrid, threads: int = 1) -> list[SweepCell]:
    """Evaluate every (beta, horizon, alpha) cell with coupled streams.

    Streams are generated once per (horizon, replication) and shared by all
    cells at that horizon, so comparisons across beta and alpha are paired.
    """
    per_horizon_cells = {
        horizon: [(beta, alpha) for beta in grid.betas for alpha in grid.alphas]
        for horizon in grid.horizons
    }
    results: dict[tuple[float, float, float], RegretEstimate] = {}
    reps = grid.replications
    for horizon in grid.horizons:
        cells = per_horizon_cells[horizon]
        cell_params = [
            ModelParams(
                rates=grid.rates,
                prices=grid.prices,
                initial_inventory=_cell_inventory(alpha, horizon),
                horizon=horizon,
            )
            for _, alpha in cells
        ]
        cell_specs = [BetaLT(beta) for beta, _ in cells]
        regret = np.empty((len(cells), reps))
        ho = np.empty((len(cells), reps))
        rev = np.empty((len(cells), reps))
        abspos = np.empty((len(cells), reps))
        sampler_params = cell_params[0]  # sampling depends on rates and horizon only

        def run_range(bounds):
            lo, hi = bounds
            for i in range(lo, hi):
                realization = sample_arrivals(sampler_params, SeedSpec(grid.master_seed, i))
                for c, (p, s) in enumerate(zip(cell_params, cell_specs)):
                    out = run_policy(p, s, realization)
                    opt = hindsight_optimal(p, realization)
                    ho[c, i] = opt.revenue
                    rev[c, i] = out.revenue
                    regret[c, i] = opt.revenue - out.revenue
                    abspos[c, i] = abs(out.final_inventory_position)

        if threads <= 1:
            run_range((0, reps))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_range, _chunks(reps, threads)))
        for c, (beta, alpha) in enumerate(cells):
            results[(beta, horizon, alpha)] = _aggregate(
                regret[c], ho[c], rev[c], abspos[c], reps
            )

    ordered = []
    for beta, horizon, alpha in product(grid.betas, grid.horizons, grid.alphas):
        est = results[(beta, horizon, alpha)]
        ordered.append(
            SweepCell(
                beta=beta,
                horizon=horizon,
                alpha=alpha,
                n=_cell_inventory(alpha, horizon),
                replications=est.replications,
                mean_regret=est.mean_regret,
                std_error=est.std_error,
                mean_hindsight=est.mean_hindsight,
                mean_policy_revenue=est.mean_policy_revenue,
                mean_abs_final_position=est.mean_abs_final_position,
            )
        )
    return ordered


_CSV_COLUMNS = (
    "beta",
    "T",
    "alpha",
    "n",
    "replications",
    "mean_regret",
    "std_error",
    "mean_hindsight",
    "mean_abs_final_position",
)


def _cell_csv_row(cell: SweepCell) -> str:
    return ",".join(
        [
            repr(cell.beta),
            repr(cell.horizon),
            repr(cell.alpha),
            str(cell.n),
            str(cell.replications),
            repr(cell.mean_regret),
            repr(cell.std_error),
            repr(cell.mean_hindsight),
            repr(cell.mean_abs_final_position),
        ]
    )


def tabulate(cells: list[SweepCell], format: str = "csv") -> str:
    """Serialize sweep results; CSV for plotting, JSON for lossless round-trips."""
    if format == "csv":
        lines = [",".join(_CSV_COLUMNS)]
        lines.extend(_cell_csv_row(cell) for cell in cells)
        return "\n".join(lines) + "\n"
    if format == "json":
        payload = [
            {
                "beta": cell.beta,
                "T": cell.horizon,
                "alpha": cell.alpha,
                "n": cell.n,
                "replications": cell.replications,
                "mean_regret": cell.mean_regret,
                "std_error": cell.std_error,
                "mean_hindsight": cell.mean_hindsight,
                "mean_policy_revenue": cell.mean_policy_revenue,
                "mean_abs_final_position": cell.mean_abs_final_position,
            }
            for cell in cells
        ]
        return json.dumps(payload, indent=2) + "\n"
    raise ValueError(f"unknown format: {format!r}")


def parse_table(text: str) -> list[SweepCell]:
    """Inverse of tabulate(..., format='json')."""
    payload = json.loads(text)
    return [
        SweepCell(
            beta=row["beta"],
            horizon=row["T"],
            alpha=row["alpha"],
            n=row["n"],
            replications=row["replications"],
            mean_regret=row["mean_regret"],
            std_error=row["std_error"],
            mean_hindsight=row["mean_hindsight"],
            mean_policy_revenue=row["mean_policy_revenue"],
            mean_abs_final_position=row["mean_abs_final_position"],
        )
        for row in payload
    ]
