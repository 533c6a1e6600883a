"""Command-line experiment harness.

Subcommands: simulate | sweep-beta | dtmc | excursion | thresholds.
Experiments are described by a strict JSON config; command-line flags
override config keys. All randomness flows from the single master seed, so a
fixed config yields byte-identical reports (the CSV timestamp header is
suppressed under --deterministic). Exit codes: 0 success, 1 runtime error,
2 validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import report
from .dp import build_eo, compute_optimal_thresholds, extrapolation_slope
from .dtmc import (
    DtmcModel,
    dm1_arrival_matrix,
    estimate_g,
    md1_departure_matrix,
    poisson_pmf,
    proposition1_bound,
    restricted_minus_kernel,
    restricted_plus_kernel,
    stationary,
)
from .excursion import crossing_tail_bound, excursion_stats, simulate_crossing_frequency, solve_dlp
from .model import ModelParams
from .policies import (
    AcceptAll,
    BetaLT,
    ExtrapolatedOptimal,
    ThresholdTable,
    VectorBetaLT,
)
from .regret import SweepGrid, estimate_regret, run_sweep, tabulate


class ConfigError(Exception):
    """Invalid experiment configuration; message names the offending field."""


# --------------------------------------------------------------------------
# config plumbing
# --------------------------------------------------------------------------

_DEFAULTS = {
    "simulate": {
        "model": {"rates": [1.0, 1.0], "prices": [2.0, 1.0],
                  "initial_inventory": 1500, "horizon": 1000.0},
        "policy": {"kind": "beta_lt", "beta": 1.5},
        "replications": 1000,
        "master_seed": 20240917,
        "threads": 1,
        "output_path": "out/simulate",
    },
    "sweep-beta": {
        "model": {"rates": [1.0, 1.0], "prices": [2.0, 1.0]},
        "sweep": {"betas": [1.1, 1.25, 1.5, 1.75, 1.9],
                  "horizons": [1000.0], "alphas": [1.5]},
        "replications": 1000,
        "master_seed": 20240917,
        "threads": 1,
        "output_path": "out/sweep_beta",
    },
    "dtmc": {
        "model": {"rates": [1.0, 1.0], "prices": [2.0, 1.0]},
        "policy": {"kind": "beta_lt", "beta": 1.5},
        "truncation": 200,
        "quadrature_nodes": 64,
        "excursions": 50000,
        "master_seed": 20240917,
        "output_path": "out/dtmc",
    },
    "excursion": {
        "model": {"rates": [1.0, 1.0], "prices": [2.0, 1.0],
                  "initial_inventory": 2500, "horizon": 1000.0},
        "policy": {"kind": "beta_lt", "beta": 1.5},
        "tail_ns": [100, 200, 500, 1000],
        "tail_replications": 2000,
        "master_seed": 20240917,
        "output_path": "out/excursion",
    },
    "thresholds": {
        "model": {"rates": [1.0, 1.0], "prices": [2.0, 1.0]},
        "dt": 1e-3,
        "t_max": 110.0,
        "t_cut": 100.0,
        "compare_prices": [],
        "master_seed": 20240917,
        "output_path": "out/thresholds",
    },
}


def _expect_map(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return node


def _check_keys(node: dict, path: str, allowed) -> None:
    unknown = sorted(set(node) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")


def _number(node: dict, path: str, key: str, positive: bool = False) -> float:
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if positive and not value > 0:
        raise ConfigError(f"{path}.{key}: must be strictly positive")
    return float(value)


def _integer(node: dict, path: str, key: str, minimum: int | None = None) -> int:
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}")
    return value


def _number_list(node: dict, path: str, key: str, positive: bool = False) -> list[float]:
    value = node[key]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}.{key}: expected a non-empty array of numbers")
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]: expected a number")
        if positive and not v > 0:
            raise ConfigError(f"{path}.{key}[{i}]: must be strictly positive")
        out.append(float(v))
    return out


def _parse_model(node, path: str = "model", instance: bool = True):
    node = _expect_map(node, path)
    allowed = ["rates", "prices"] + (["initial_inventory", "horizon"] if instance else [])
    _check_keys(node, path, allowed)
    for key in ("rates", "prices"):
        if key not in node:
            raise ConfigError(f"{path}.{key}: required")
    rates = _number_list(node, path, "rates", positive=True)
    prices = _number_list(node, path, "prices", positive=True)
    if len(prices) != len(rates):
        raise ConfigError(f"{path}.prices: must match rates in length")
    if any(a <= b for a, b in zip(prices, prices[1:])):
        raise ConfigError(f"{path}.prices: must be strictly decreasing")
    if not instance:
        return {"rates": tuple(rates), "prices": tuple(prices)}
    for key in ("initial_inventory", "horizon"):
        if key not in node:
            raise ConfigError(f"{path}.{key}: required")
    n = _integer(node, path, "initial_inventory", minimum=1)
    horizon = _number(node, path, "horizon", positive=True)
    try:
        return ModelParams(tuple(rates), tuple(prices), n, horizon)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_policy(node, path: str = "policy"):
    node = _expect_map(node, path)
    kind = node.get("kind")
    if kind == "beta_lt":
        _check_keys(node, path, ["kind", "beta"])
        if "beta" not in node:
            raise ConfigError(f"{path}.beta: required")
        beta = node["beta"]
        if isinstance(beta, bool) or not isinstance(beta, (int, float)) or not beta > 0:
            raise ConfigError(f"{path}.beta: must be a strictly positive number")
        return BetaLT(float(beta))
    if kind == "vector_beta_lt":
        _check_keys(node, path, ["kind", "betas"])
        if "betas" not in node:
            raise ConfigError(f"{path}.betas: required")
        betas = _number_list(node, path, "betas", positive=True)
        try:
            return VectorBetaLT(tuple(betas))
        except ValueError as exc:
            raise ConfigError(f"{path}.betas: {exc}") from exc
    if kind == "accept_all":
        _check_keys(node, path, ["kind"])
        return AcceptAll()
    if kind == "threshold_table":
        _check_keys(node, path, ["kind", "table_path"])
        table_path = node.get("table_path")
        if not isinstance(table_path, str):
            raise ConfigError(f"{path}.table_path: required string")
        try:
            return ThresholdTable.from_csv(table_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}.table_path: {exc}") from exc
    if kind == "extrapolated_optimal":
        _check_keys(node, path, ["kind", "policy_path"])
        policy_path = node.get("policy_path")
        if not isinstance(policy_path, str):
            raise ConfigError(f"{path}.policy_path: required string")
        try:
            payload = json.loads(Path(policy_path).read_text(encoding="utf-8"))
            base = ThresholdTable(
                np.asarray(payload["breakpoints"], dtype=np.float64),
                np.asarray(payload["values"], dtype=np.int64),
            )
            return ExtrapolatedOptimal(base=base, slope=float(payload["slope"]),
                                       t_cut=float(payload["t_cut"]))
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}.policy_path: {exc}") from exc
    raise ConfigError(
        f"{path}.kind: expected one of beta_lt | vector_beta_lt | accept_all | "
        f"threshold_table | extrapolated_optimal, got {kind!r}"
    )


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_config(command: str, args) -> dict:
    cfg = json.loads(json.dumps(_DEFAULTS[command]))  # deep copy
    if args.config is not None:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"--config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: invalid JSON ({exc})") from exc
        cfg = _merge(cfg, _expect_map(user, "config"))
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.reps is not None:
        cfg["replications"] = args.reps
    if args.out is not None:
        cfg["output_path"] = args.out
    if args.threads is not None:
        cfg["threads"] = args.threads
    _check_keys(cfg, "config", list(_DEFAULTS[command]) + ["threads"])
    if "replications" in cfg and "replications" in _DEFAULTS[command]:
        cfg["replications"] = _integer(cfg, "config", "replications", minimum=1)
    cfg["master_seed"] = _integer(cfg, "config", "master_seed", minimum=0)
    threads = cfg.get("threads", 1)
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError("config.threads: must be an integer >= 1")
    if not isinstance(cfg.get("output_path"), str) or not cfg["output_path"]:
        raise ConfigError("config.output_path: required string")
    return cfg


# --------------------------------------------------------------------------
# report writing
# --------------------------------------------------------------------------


def _out_stem(cfg) -> Path:
    stem = Path(cfg["output_path"])
    stem.parent.mkdir(parents=True, exist_ok=True)
    return stem


def _write_csv(path: Path, body: str, deterministic: bool) -> None:
    header = "" if deterministic else f"# generated: {datetime.now(timezone.utc).isoformat()}\n"
    path.write_text(header + body, encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_simulate(cfg, deterministic: bool) -> None:
    params = _parse_model(cfg["model"], "model", instance=True)
    spec = _parse_policy(cfg["policy"], "policy")
    reps = cfg["replications"]
    est = estimate_regret(params, spec, reps, cfg["master_seed"], threads=cfg.get("threads", 1))
    stem = _out_stem(cfg)
    beta = cfg["policy"].get("beta", math.nan) if isinstance(cfg["policy"], dict) else math.nan
    row = ",".join([
        repr(float(beta)), repr(params.horizon), repr(params.alpha),
        str(params.initial_inventory), str(reps), repr(est.mean_regret),
        repr(est.std_error), repr(est.mean_hindsight), repr(est.mean_abs_final_position),
    ])
    _write_csv(
        stem.with_suffix(".csv"),
        "beta,T,alpha,n,replications,mean_regret,std_error,mean_hindsight,"
        "mean_abs_final_position\n" + row + "\n",
        deterministic,
    )
    payload = {
        "model": {"rates": list(params.rates), "prices": list(params.prices),
                  "initial_inventory": params.initial_inventory, "horizon": params.horizon},
        "policy": cfg["policy"],
        "replications": reps,
        "master_seed": cfg["master_seed"],
        "estimate": est.__dict__,
    }
    if isinstance(spec, BetaLT):
        payload["beta_in_guarantee_range"] = spec.in_guarantee_range(params)
    if reps == 1:
        payload["degenerate_single_replication"] = True
        print("warning: single replication, std_error is degenerate (0)", file=sys.stderr)
    _write_json(stem.with_suffix(".json"), payload)
    print(
        f"simulate: mean_regret={est.mean_regret:.4f} se={est.std_error:.4f} "
        f"reps={reps} -> {stem}.csv/.json"
    )


def _cmd_sweep_beta(cfg, deterministic: bool) -> None:
    base = _parse_model(cfg["model"], "model", instance=False)
    sweep = _expect_map(cfg["sweep"], "sweep")
    _check_keys(sweep, "sweep", ["betas", "horizons", "alphas"])
    for key in ("betas", "horizons", "alphas"):
        if key not in sweep:
            raise ConfigError(f"sweep.{key}: required")
    try:
        grid = SweepGrid(
            betas=tuple(_number_list(sweep, "sweep", "betas", positive=True)),
            horizons=tuple(_number_list(sweep, "sweep", "horizons", positive=True)),
            alphas=tuple(_number_list(sweep, "sweep", "alphas", positive=True)),
            rates=base["rates"],
            prices=base["prices"],
            replications=cfg["replications"],
            master_seed=cfg["master_seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    cells = run_sweep(grid, threads=cfg.get("threads", 1))
    stem = _out_stem(cfg)
    _write_csv(stem.with_suffix(".csv"), tabulate(cells, "csv"), deterministic)
    stem.with_suffix(".json").write_text(tabulate(cells, "json"), encoding="utf-8")
    report.sweep_figure(cells, stem.with_suffix(".png"))
    best = min(cells, key=lambda c: c.mean_regret)
    print(
        f"sweep-beta: {len(cells)} cells, best beta={best.beta:g} "
        f"(T={best.horizon:g}, alpha={best.alpha:g}) regret={best.mean_regret:.4f} "
        f"-> {stem}.csv/.json/.png"
    )


def _cmd_dtmc(cfg, deterministic: bool) -> None:
    base = _parse_model(cfg["model"], "model", instance=False)
    if len(base["rates"]) != 2:
        raise ConfigError("model.rates: dtmc analysis requires exactly two classes")
    spec = _parse_policy(cfg["policy"], "policy")
    if not isinstance(spec, BetaLT):
        raise ConfigError("policy.kind: dtmc analysis requires beta_lt")
    truncation = _integer(cfg, "config", "truncation", minimum=2)
    nodes = _integer(cfg, "config", "quadrature_nodes", minimum=8)
    excursions = _integer(cfg, "config", "excursions", minimum=1000)
    l1, l2 = base["rates"]
    if not l1 < spec.beta < l1 + l2:
        raise ConfigError("policy.beta: must lie strictly between lambda1 and lambda1+lambda2")
    model = DtmcModel.build(l1, l2, beta=spec.beta, truncation=truncation,
                            quadrature_nodes=nodes)
    dist = stationary(model)
    bound = proposition1_bound(dist)

    plus = restricted_plus_kernel(model)
    dm1 = dm1_arrival_matrix(model.lambda12, truncation + 1)
    ghist = estimate_g(model, count=excursions, seed=cfg["master_seed"])
    minus = restricted_minus_kernel(model, ghist)
    md1_row = md1_departure_matrix(model.lambda1, truncation + 1)[0]

    stem = _out_stem(cfg)
    kernel_lines = ["i,j,q_ij"]
    mat = model.matrix
    m = truncation
    nz = np.argwhere(mat > 0.0)
    for r, c in nz:
        kernel_lines.append(f"{r - m},{c - m},{mat[r, c]:.17g}")
    _write_csv(Path(f"{stem}_kernel.csv"), "\n".join(kernel_lines) + "\n", deterministic)
    pi_lines = ["i,pi_i"]
    pi_lines.extend(f"{s},{p:.17g}" for s, p in zip(dist.states, dist.probs))
    _write_csv(Path(f"{stem}_pi.csv"), "\n".join(pi_lines) + "\n", deterministic)
    payload = {
        "rescaled_lambda1": model.lambda1,
        "rescaled_lambda2": model.lambda2,
        "beta": spec.beta,
        "truncation": truncation,
        "quadrature_nodes": nodes,
        "stationary_residual_l1": dist.residual,
        "pi0": dist.pi0,
        "first_moment_abs": dist.first_moment_abs,
        "position_bound": bound,
        "plus_chain_max_abs_diff_vs_dm1": float(np.abs(plus - dm1).max()),
        # partial first jobs only shrink the 0 -> l entries for l >= 1
        "minus_chain_row0_max_excess_over_md1": float((minus[0, 1:] - md1_row[1:]).max()),
        "g_excursions": excursions,
    }
    _write_json(stem.with_suffix(".json"), payload)
    report.stationary_figure(dist, stem.with_suffix(".png"))
    print(
        f"dtmc: pi0={dist.pi0:.6f} E|i|={dist.first_moment_abs:.6f} "
        f"bound={bound:.6f} residual={dist.residual:.2e} -> {stem}_kernel.csv, "
        f"{stem}_pi.csv, {stem}.json, {stem}.png"
    )


def _cmd_excursion(cfg, deterministic: bool) -> None:
    params = _parse_model(cfg["model"], "model", instance=True)
    if params.num_classes != 2:
        raise ConfigError("model.rates: excursion analysis requires exactly two classes")
    spec = _parse_policy(cfg["policy"], "policy")
    if not isinstance(spec, BetaLT):
        raise ConfigError("policy.kind: excursion analysis requires beta_lt")
    l1, l2 = params.rates
    if not l1 < spec.beta < l1 + l2:
        raise ConfigError("policy.beta: must lie strictly between lambda1 and lambda1+lambda2")
    tail_ns = cfg.get("tail_ns", [])
    if tail_ns:
        tail_ns = [_integer({"n": v}, "config.tail_ns", "n", minimum=1) for v in tail_ns]
    tail_reps = _integer(cfg, "config", "tail_replications", minimum=0)

    stats = excursion_stats(l1, l2, spec.beta)
    dlp = solve_dlp(params)
    # the accepted-fraction identity holds when the inventory sits on the line
    on_line = ModelParams(params.rates, params.prices,
                          max(1, int(round(spec.beta * params.horizon))), params.horizon)
    dlp_on_line = solve_dlp(on_line)
    rows = []
    if tail_ns:
        alpha = params.alpha
        lambda12_scaled = (l1 + l2) / alpha
        if not 0 < lambda12_scaled < 1:
            raise ConfigError(
                "model: tail bound requires alpha = n/T above lambda1 + lambda2"
            )
        delta = 1.0 - lambda12_scaled
        for n in sorted(tail_ns):
            row = {"n": n, "bound": crossing_tail_bound(lambda12_scaled, delta, n)}
            if tail_reps > 0:
                row["empirical"] = simulate_crossing_frequency(
                    lambda12_scaled, n, tail_reps, cfg["master_seed"]
                )
            else:
                row["empirical"] = None
            rows.append(row)

    stem = _out_stem(cfg)
    payload = {
        "beta": spec.beta,
        "nu": stats.nu,
        "kappa": stats.kappa,
        "expected_above": stats.expected_above,
        "expected_below": stats.expected_below,
        "above_fraction": stats.above_fraction,
        "dlp": dlp.__dict__,
        "dlp_on_line": dlp_on_line.__dict__,
        "ratio_identity_residual": abs(stats.above_fraction - dlp_on_line.z2),
        "tail_replications": tail_reps,
    }
    _write_json(stem.with_suffix(".json"), payload)
    lines = ["n,bound,empirical"]
    for row in rows:
        emp = "" if row["empirical"] is None else repr(row["empirical"])
        lines.append(f"{row['n']},{repr(row['bound'])},{emp}")
    _write_csv(stem.with_suffix(".csv"), "\n".join(lines) + "\n", deterministic)
    if rows:
        report.tail_bound_figure(rows, stem.with_suffix(".png"))
    print(
        f"excursion: nu={stats.nu:.6f} E[A]={stats.expected_above:.6f} "
        f"E[B]={stats.expected_below:.6f} above_fraction={stats.above_fraction:.6f} "
        f"-> {stem}.json/.csv"
    )


def _cmd_thresholds(cfg, deterministic: bool) -> None:
    base = _parse_model(cfg["model"], "model", instance=False)
    if len(base["rates"]) != 2:
        raise ConfigError("model.rates: threshold computation requires exactly two classes")
    dt = _number(cfg, "config", "dt", positive=True)
    t_max = _number(cfg, "config", "t_max", positive=True)
    t_cut = _number(cfg, "config", "t_cut", positive=True)
    if t_cut > t_max:
        raise ConfigError("config.t_cut: must not exceed t_max")
    compare = cfg.get("compare_prices", [])
    if compare:
        compare = _number_list(cfg, "config", "compare_prices", positive=True)
    params = ModelParams(base["rates"], base["prices"], 1, t_max)
    try:
        grid = compute_optimal_thresholds(params, dt=dt, t_max=t_max)
        eo = build_eo(grid, t_cut)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc

    stem = _out_stem(cfg)
    table_csv = ["t_breakpoint,theta_value"]
    table_csv.extend(
        f"{t:.17g},{v:d}" for t, v in zip(grid.thresholds.breakpoints, grid.thresholds.values)
    )
    _write_csv(Path(f"{stem}_theta.csv"), "\n".join(table_csv) + "\n", deterministic)
    _write_json(
        Path(f"{stem}_eo.json"),
        {
            "kind": "extrapolated_optimal",
            "t_cut": eo.t_cut,
            "slope": eo.slope,
            "breakpoints": [float(t) for t in eo.base.breakpoints],
            "values": [int(v) for v in eo.base.values],
        },
    )
    figures = {f"p2={base['prices'][1]:g}": grid.thresholds}
    slopes = {repr(base["prices"][1]): eo.slope}
    for p2 in compare:
        alt_prices = (base["prices"][0], p2)
        if not alt_prices[0] > p2 > 0:
            raise ConfigError("config.compare_prices: each p2 must lie in (0, p1)")
        alt = ModelParams(base["rates"], alt_prices, 1, t_max)
        alt_grid = compute_optimal_thresholds(alt, dt=dt, t_max=t_max)
        figures[f"p2={p2:g}"] = alt_grid.thresholds
        slopes[repr(p2)] = extrapolation_slope(alt_grid, t_cut)
    payload = {
        "dt": dt,
        "t_max": t_max,
        "t_cut": t_cut,
        "slope": eo.slope,
        "theta_at_cut": grid.thresholds.theta(t_cut),
        "slopes_by_p2": slopes,
    }
    _write_json(stem.with_suffix(".json"), payload)
    report.threshold_figure(figures, stem.with_suffix(".png"), t_max=t_max)
    print(
        f"thresholds: slope={eo.slope:.4f} theta({t_cut:g})="
        f"{grid.thresholds.theta(t_cut)} -> {stem}_theta.csv, {stem}_eo.json, "
        f"{stem}.json, {stem}.png"
    )


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep-beta": _cmd_sweep_beta,
    "dtmc": _cmd_dtmc,
    "excursion": _cmd_excursion,
    "thresholds": _cmd_thresholds,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltyield",
        description="Linear-threshold yield management experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--reps", type=int, default=None, help="override replications")
        p.add_argument("--out", type=str, default=None, help="override output_path stem")
        p.add_argument("--threads", type=int, default=None, help="parallel replication workers")
        p.add_argument("--deterministic", action="store_true",
                       help="suppress the CSV timestamp header")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.command, args)
        _COMMANDS[args.command](cfg, args.deterministic)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface runtime failures as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
