"""Matplotlib figures rendered next to the delimited reports.

All figures are written with pinned PNG metadata so repeated runs of the
same experiment produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# strip the matplotlib version tag; PNG bytes then depend on the data only
_PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def sweep_figure(cells, path) -> None:
    """Mean regret against beta, one series per (horizon, alpha) pair."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = {}
    for cell in cells:
        series.setdefault((cell.horizon, cell.alpha), []).append(cell)
    for (horizon, alpha), group in sorted(series.items()):
        group = sorted(group, key=lambda c: c.beta)
        betas = [c.beta for c in group]
        regrets = [max(c.mean_regret, 1e-12) for c in group]
        ax.plot(betas, regrets, marker="o", ms=3, lw=1,
                label=f"T={horizon:g}, alpha={alpha:g}")
    ax.set_yscale("log")
    ax.set_xlabel("beta")
    ax.set_ylabel("mean regret")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def threshold_figure(tables: dict, path, t_max: float | None = None) -> None:
    """Step plot of one or more threshold functions keyed by label."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, table in tables.items():
        bp = table.breakpoints
        vals = table.values
        upper = t_max if t_max is not None else float(bp[-1]) * 1.05 + 1.0
        ts = np.append(bp, upper)
        ax.step(ts, np.append(vals, vals[-1]), where="post", lw=1, label=label)
    ax.set_xlabel("remaining time t")
    ax.set_ylabel("threshold")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def stationary_figure(dist, path, span: int = 40) -> None:
    """Stationary probabilities near the line (log scale)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    mask = np.abs(dist.states) <= span
    ax.semilogy(dist.states[mask], dist.probs[mask], marker=".", ls="-", lw=0.8)
    ax.set_xlabel("state (position relative to the line)")
    ax.set_ylabel("stationary probability")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def tail_bound_figure(rows, path) -> None:
    """Crossing-probability bound (and empirical frequency when present) vs n."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ns = [r["n"] for r in rows]
    ax.semilogy(ns, [max(r["bound"], 1e-300) for r in rows], marker="o", ms=3,
                lw=1, label="upper bound")
    if rows and rows[0].get("empirical") is not None:
        ax.semilogy(ns, [max(r["empirical"], 1e-6) for r in rows], marker="x",
                    ms=4, lw=0, label="empirical frequency")
    ax.set_xlabel("n")
    ax.set_ylabel("crossing probability")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
