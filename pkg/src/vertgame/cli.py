"""Command-line interface: solve, simulate, analyze, sweep.

Subcommands
-----------
solve             find an equilibrium on a branch, verify it, dump artifacts
best-response     one player's best response to a fixed opponent strategy
simulate          one controlled path with an event log
stationary        long-run density and profit statistics
chain             embedded jump chain (transition matrix, invariant law)
sweep             re-solve along a parameter grid
integrate         vertical-integration risk/return study over a p1 grid
report            human-readable summary of a results directory

Exit codes: 0 success, 1 bad input/IO, 2 solver did not converge,
3 equilibrium verification failed.

All CSV output uses '.' decimals, comma delimiters, one header row with
units in parentheses, and full round-trip float precision.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import dynamics
from .consumer import consumer_best_response
from .equilibrium import BRANCHES, classify, tatonnement, verify
from .model import ConfigError, ConsumerCurve, ModelParams, build_profits, load_config
from .numerics import SolverFailure
from .producer import producer_best_response
from .values import (
    ProducerRow,
    StrategyPair,
    read_thresholds_csv,
    write_thresholds_csv,
)

EXIT_OK, EXIT_INPUT, EXIT_NO_CONVERGE, EXIT_VERIFY = 0, 1, 2, 3


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _common_flags(p: argparse.ArgumentParser, strategy: bool = False) -> None:
    p.add_argument("--config", required=True, help="TOML model parameters")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")
    p.add_argument("--workers", type=int, default=None, help="parallel workers")
    p.add_argument("--engine", default="auto", choices=["auto", "compiled", "python"])
    if strategy:
        p.add_argument("--strategy", required=True,
                       help="thresholds.csv of the strategy pair to use")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vertgame", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="equilibrium on a branch")
    _common_flags(p)
    p.add_argument("--branch", default="generic", choices=list(BRANCHES))
    p.add_argument("--mode", default="async", choices=["async", "sync"])
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--dump-value", action="store_true", help="write values.json")
    p.add_argument("--dump-history", action="store_true", help="write history.csv")

    p = sub.add_parser("best-response", help="single best response")
    p.add_argument("player", choices=["consumer", "producer"])
    _common_flags(p, strategy=True)
    p.add_argument("--branch", default=None, choices=list(BRANCHES))
    p.add_argument("--dump-value", action="store_true")

    p = sub.add_parser("simulate", help="one path with event log")
    _common_flags(p, strategy=True)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--regime0", default="plus", choices=["plus", "minus"])
    p.add_argument("--horizon", type=float, default=100.0, help="years")
    p.add_argument("--dt", type=float, default=1.0 / 3650.0, help="years per step")

    p = sub.add_parser("stationary", help="long-run density and statistics")
    _common_flags(p, strategy=True)
    p.add_argument("--years", type=float, default=1e6, help="aggregate post-burn-in years")
    p.add_argument("--paths", type=int, default=64)
    p.add_argument("--dt", type=float, default=1.0 / 365.0)
    p.add_argument("--burn-in", type=float, default=None)
    p.add_argument("--bins", type=int, default=400)
    p.add_argument("--regime0", default="plus", choices=["plus", "minus"])

    p = sub.add_parser("chain", help="embedded jump chain")
    _common_flags(p, strategy=True)
    p.add_argument("--x0", type=float, default=None,
                   help="also report expected time to first switch from x0")

    p = sub.add_parser("sweep", help="re-solve along a parameter grid")
    _common_flags(p)
    p.add_argument("--branch", default="generic", choices=list(BRANCHES))
    p.add_argument("--param", required=True,
                   choices=["sigma", "h0", "p1", "kappa0", "mu_plus", "mu_minus"])
    p.add_argument("--grid", required=True, help="comma-separated increasing values")
    p.add_argument("--stats", action="store_true", help="simulate long-run stats per point")
    p.add_argument("--years", type=float, default=2e5)
    p.add_argument("--paths", type=int, default=32)
    p.add_argument("--dt", type=float, default=1.0 / 365.0)

    p = sub.add_parser("integrate", help="vertical-integration study")
    _common_flags(p)
    p.add_argument("--p1-grid", required=True, help="comma-separated pass-through values")
    p.add_argument("--lambda-n", type=int, default=41, help="points on the mixing grid")
    p.add_argument("--years", type=float, default=2e5)
    p.add_argument("--paths", type=int, default=32)
    p.add_argument("--dt", type=float, default=1.0 / 365.0)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--out", required=True, help="directory with prior results")
    return ap


# ------------------------------------------------------------------ solve


def _verify_to_csv(checks, path: str) -> bool:
    rows = [[c.name, "pass" if c.passed else "FAIL", c.value, c.tol] for c in checks]
    _write_csv(path, ["check", "status", "value", "tolerance"], rows)
    return all(c.passed for c in checks)


def run_solve(args) -> int:
    params = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    eqm = tatonnement(params, mode=args.mode, branch=args.branch,
                      max_iter=args.max_iter, tol=args.tol)
    write_thresholds_csv(
        os.path.join(args.out, "thresholds.csv"), eqm.strategies,
        extra={"type": eqm.type_tag, "branch": eqm.branch},
    )
    summary = {
        "type": eqm.type_tag,
        "branch": eqm.branch,
        "mode": eqm.mode,
        "iterations": eqm.iterations,
        "converged": eqm.converged,
        "strategies": eqm.strategies.to_dict(),
        "diagnostics": {k: str(v) for k, v in eqm.diagnostics.items()},
    }
    with open(os.path.join(args.out, "equilibrium.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    if args.dump_history:
        rows = [
            [h["iteration"], h["delta"]] + list(h["pair"].values())
            for h in eqm.convergence_history
        ]
        keys = list(eqm.convergence_history[0]["pair"].keys()) if rows else []
        _write_csv(os.path.join(args.out, "history.csv"),
                   ["iteration", "delta (USD)"] + keys, rows)
    if args.dump_value:
        with open(os.path.join(args.out, "values.json"), "w") as fh:
            json.dump({"producer": eqm.producer_values.to_dict(),
                       "consumer": eqm.consumer_values.to_dict()}, fh, indent=1)
    checks = verify(eqm, params)
    ok = _verify_to_csv(checks, os.path.join(args.out, "verify.csv"))
    print(f"type={eqm.type_tag} iterations={eqm.iterations} "
          f"converged={eqm.converged} checks={'pass' if ok else 'FAIL'}")
    print(eqm.strategies.describe())
    if not eqm.converged:
        return EXIT_NO_CONVERGE
    if not ok:
        return EXIT_VERIFY
    return EXIT_OK


def run_best_response(args) -> int:
    params = load_config(args.config)
    pair = read_thresholds_csv(args.strategy)
    os.makedirs(args.out, exist_ok=True)
    if args.player == "consumer":
        br = consumer_best_response(pair, params, branch=args.branch)
        out_pair = StrategyPair(pair.producer_plus, pair.producer_minus,
                                br.y_low, br.y_high)
        values = br.values
        print(f"consumer best response: kind={br.kind} "
              f"y_low={_fmt(br.y_low)} y_high={_fmt(br.y_high)}")
    else:
        br = producer_best_response(pair.consumer, params, branch=args.branch)
        out_pair = StrategyPair(
            br.row_plus if br.row_plus is not None else ProducerRow(),
            br.row_minus if br.row_minus is not None else ProducerRow(),
            pair.y_low, pair.y_high,
        )
        values = br.values
        print(f"producer best response: kind={br.kind}")
        print(out_pair.describe())
    write_thresholds_csv(os.path.join(args.out, "best_response.csv"), out_pair,
                         extra={"kind": br.kind})
    if args.dump_value:
        with open(os.path.join(args.out, "br_values.json"), "w") as fh:
            json.dump(values.to_dict(), fh, indent=1)
    return EXIT_OK


def run_simulate(args) -> int:
    params = load_config(args.config)
    pair = read_thresholds_csv(args.strategy)
    os.makedirs(args.out, exist_ok=True)
    rec = dynamics.simulate_path(
        pair, params, args.x0, args.regime0, horizon=args.horizon,
        dt=args.dt, seed=args.seed, engine=args.engine,
    )
    _write_csv(os.path.join(args.out, "events.csv"),
               ["t (yr)", "kind", "pre (USD)", "post (USD)"],
               [[t, k, pre, post] for t, k, pre, post in rec.events])
    _write_csv(os.path.join(args.out, "path.csv"),
               ["t (yr)", "x (USD)", "regime"],
               [[t, x, "plus" if r == 0 else "minus"]
                for t, x, r in zip(rec.t, rec.x, rec.regime)])
    for w in rec.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"simulated {args.horizon} years, {len(rec.events)} events, "
          f"final x={rec.x_end:.4f} ({rec.regime_end})")
    return EXIT_OK


def _stats_rows(stats: dict, params: ModelParams, tag: str) -> tuple[list[str], list]:
    header = [
        "type", "sigma (USD/yr^0.5)", "mean_x (USD)", "std_x (USD)", "var_x (USD^2)",
        "e_pi_p (USD/yr)", "apoo_p", "e_pi_c (USD/yr)", "apoo_c",
        "consumer_switches_per_yr (1/yr)", "producer_impulses_per_yr (1/yr)",
        "rho_plus", "years (yr)",
    ]
    row = [
        tag, params.sigma, stats["mean"], stats["std"], stats["var"],
        stats["e_pi_p"], stats["apoo_p"], stats["e_pi_c"], stats["apoo_c"],
        stats["consumer_switches_per_yr"], stats["producer_impulses_per_yr"],
        stats["rho_plus"], stats["years"],
    ]
    return header, row


def run_stationary(args) -> int:
    params = load_config(args.config)
    pair = read_thresholds_csv(args.strategy)
    os.makedirs(args.out, exist_ok=True)
    res = dynamics.simulate_long_run(
        pair, params, years=args.years, burn_in=args.burn_in, dt=args.dt,
        n_paths=args.paths, seed=args.seed, bins=args.bins,
        regime0=args.regime0, workers=args.workers, engine=args.engine,
    )
    dens = dynamics.stationary_density(res)
    _write_csv(
        os.path.join(args.out, "density.csv"),
        ["bin_left (USD)", "bin_right (USD)", "mass", "mass_plus", "mass_minus"],
        [[l_, r_, m, mp, mm] for l_, r_, m, mp, mm in zip(
            dens.bin_left, dens.bin_right, dens.mass, dens.mass_plus, dens.mass_minus)],
    )
    _write_csv(
        os.path.join(args.out, "density_smooth.csv"),
        ["x (USD)", "density (1/USD)"],
        [[x, d] for x, d in zip(dens.smooth_x, dens.smooth_density)],
    )
    stats = dynamics.long_run_stats(res, params)
    tag = classify(pair)
    header, row = _stats_rows(stats, params, tag)
    _write_csv(os.path.join(args.out, "stats.csv"), header, [row])
    print(f"mean={stats['mean']:.4f} std={stats['std']:.4f} "
          f"e_pi_p={stats['e_pi_p']:.4f} e_pi_c={stats['e_pi_c']:.4f} "
          f"switches/yr={stats['consumer_switches_per_yr']:.5f}")
    return EXIT_OK


def run_chain(args) -> int:
    params = load_config(args.config)
    pair = read_thresholds_csv(args.strategy)
    os.makedirs(args.out, exist_ok=True)
    chain = dynamics.build_jump_chain(pair, params)
    rho_p, rho_m = dynamics.regime_occupation(chain)
    header = ["state"] + [f"to_{s}" for s in chain.states] + ["pi", "zeta (yr)"]
    rows = [
        [s] + list(chain.P[i]) + [chain.pi[i], chain.zeta[i]]
        for i, s in enumerate(chain.states)
    ]
    _write_csv(os.path.join(args.out, "chain.csv"), header, rows)
    summary = {
        "rho_plus": rho_p, "rho_minus": rho_m,
        "recurrent": chain.recurrent,
        "stationarity_residual": chain.diagnostics["stationarity_residual"],
    }
    if args.x0 is not None:
        summary["expected_switch_time"] = dynamics.expected_switch_time(
            pair, params, args.x0, detail=True)
    with open(os.path.join(args.out, "chain.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    print(f"rho_plus={rho_p:.4f} recurrent={chain.recurrent}")
    return EXIT_OK


# ------------------------------------------------------------------ sweeps


def _apply_param(params: ModelParams, name: str, value: float) -> ModelParams:
    from dataclasses import replace
    if name == "sigma":
        return replace(params, sigma=value)
    if name == "kappa0":
        return replace(params, kappa0=value)
    if name == "mu_plus":
        return replace(params, mu_plus=value)
    if name == "mu_minus":
        return replace(params, mu_minus=value)
    if name == "h0":
        return replace(params, h_plus=value, h_minus=value)
    if name == "p1":
        if not isinstance(params.consumer, ConsumerCurve):
            raise ConfigError("sweeping p1 needs the structural consumer parameterization")
        return replace(params, consumer=replace(params.consumer, p1=value))
    raise ConfigError(f"unknown sweep parameter {name!r}")


def _parse_grid(text: str) -> list[float]:
    vals = [float(tok) for tok in text.split(",") if tok.strip()]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"grid must be strictly increasing, got {vals}")
    return vals


def run_sweep(args) -> int:
    params = load_config(args.config)
    grid = _parse_grid(args.grid)
    os.makedirs(args.out, exist_ok=True)
    header = ["param", "value", "status", "type"]
    header += list(StrategyPair(ProducerRow(), ProducerRow()).entries().keys())
    if args.stats:
        header += ["mean_x (USD)", "std_x (USD)", "e_pi_p (USD/yr)", "e_pi_c (USD/yr)",
                   "consumer_switches_per_yr (1/yr)", "producer_impulses_per_yr (1/yr)"]
    rows = []
    for value in grid:
        try:
            p = _apply_param(params, args.param, value)
            eqm = tatonnement(p, branch=args.branch)
            status = "converged" if eqm.converged else "unconverged"
            row = [args.param, value, status, eqm.type_tag]
            row += list(eqm.strategies.entries().values())
            if args.stats and eqm.converged:
                res = dynamics.simulate_long_run(
                    eqm.strategies, p, years=args.years, dt=args.dt,
                    n_paths=args.paths, seed=args.seed,
                    workers=args.workers, engine=args.engine)
                s = dynamics.long_run_stats(res, p)
                row += [s["mean"], s["std"], s["e_pi_p"], s["e_pi_c"],
                        s["consumer_switches_per_yr"], s["producer_impulses_per_yr"]]
            elif args.stats:
                row += [None] * 6
        except (SolverFailure, ConfigError) as exc:
            row = [args.param, value, f"failed: {exc}", ""]
            row += [None] * (len(header) - 4)
        rows.append(row)
    _write_csv(os.path.join(args.out, "sweep.csv"), header, rows)
    print(f"swept {args.param} over {len(grid)} points -> sweep.csv")
    return EXIT_OK


def run_integrate(args) -> int:
    params = load_config(args.config)
    p1_grid = _parse_grid(args.p1_grid)
    lambdas = np.linspace(0.0, 1.0, args.lambda_n)
    os.makedirs(args.out, exist_ok=True)
    curve_rows, star_rows = [], []
    for p1 in p1_grid:
        try:
            p = _apply_param(params, "p1", p1)
            eqm = tatonnement(p, branch="generic")
            if not eqm.converged:
                raise SolverFailure("equilibrium did not converge")
            res = dynamics.simulate_long_run(
                eqm.strategies, p, years=args.years, dt=args.dt,
                n_paths=args.paths, seed=args.seed,
                workers=args.workers, engine=args.engine)
            s = dynamics.long_run_stats(res, p)
            e_p, e_c = s["e_pi_p"], s["e_pi_c"]
            v_p, v_c, cov = s["var_pi_p"], s["var_pi_c"], s["cov_pi"]
            for lam in lambdas:
                e_mix = lam * e_c + (1 - lam) * e_p
                var_mix = (lam ** 2 * v_c + (1 - lam) ** 2 * v_p
                           + 2 * lam * (1 - lam) * cov)
                curve_rows.append([p1, lam, e_mix, math.sqrt(max(var_mix, 0.0))])
            denom = v_p + v_c - 2 * cov
            lam_star = 0.5 if denom <= 0 else (v_p - cov) / denom
            lam_star = min(max(lam_star, 0.0), 1.0)
            star_rows.append([
                p1, lam_star, "converged",
                e_p, math.sqrt(max(v_p, 0.0)),   # lambda=0 endpoint: pure producer
                e_c, math.sqrt(max(v_c, 0.0)),   # lambda=1 endpoint: pure consumer
            ])
        except (SolverFailure, ConfigError) as exc:
            star_rows.append([p1, None, f"failed: {exc}", None, None, None, None])
    _write_csv(os.path.join(args.out, "integration.csv"),
               ["p1", "lambda", "e_pi_lambda (USD/yr)", "sd_pi_lambda (USD/yr)"],
               curve_rows)
    _write_csv(os.path.join(args.out, "lambda_star.csv"),
               ["p1", "lambda_star", "status",
                "e_pi_p_end (USD/yr)", "sd_pi_p_end (USD/yr)",
                "e_pi_c_end (USD/yr)", "sd_pi_c_end (USD/yr)"],
               star_rows)
    print(f"integration study over p1={p1_grid} -> integration.csv, lambda_star.csv")
    return EXIT_OK


def run_report(args) -> int:
    out = args.out
    expected = ["thresholds.csv", "equilibrium.json", "verify.csv"]
    missing = [f for f in expected if not os.path.exists(os.path.join(out, f))]
    lines = ["vertgame results summary", "=" * 40]
    if missing == expected:
        print(f"error: no result files in {out}; expected at least one of {expected}",
              file=sys.stderr)
        return EXIT_INPUT
    if os.path.exists(os.path.join(out, "equilibrium.json")):
        with open(os.path.join(out, "equilibrium.json")) as fh:
            eq = json.load(fh)
        lines.append(f"equilibrium type: {eq['type']}  branch: {eq['branch']}")
        lines.append(f"iterations: {eq['iterations']}  converged: {eq['converged']}")
        lines.append("thresholds:")
        for k, v in eq["strategies"].items():
            lines.append(f"  {k:20s} {v if v else '-'}")
    if os.path.exists(os.path.join(out, "verify.csv")):
        with open(os.path.join(out, "verify.csv")) as fh:
            rows = list(csv.DictReader(fh))
        n_fail = sum(1 for r in rows if r["status"] != "pass")
        lines.append(f"verification: {len(rows)} checks, {n_fail} failed")
        for r in rows:
            if r["status"] != "pass":
                lines.append(f"  FAIL {r['check']}: {r['value']} (tol {r['tolerance']})")
    if os.path.exists(os.path.join(out, "stats.csv")):
        with open(os.path.join(out, "stats.csv")) as fh:
            rows = list(csv.DictReader(fh))
        lines.append("long-run statistics:")
        for r in rows:
            lines.append("  " + ", ".join(f"{k}={v}" for k, v in r.items()))
    if os.path.exists(os.path.join(out, "sweep.csv")):
        with open(os.path.join(out, "sweep.csv")) as fh:
            rows = list(csv.DictReader(fh))
        lines.append(f"sweep: {len(rows)} points")
        for r in rows:
            lines.append(f"  {r['param']}={r['value']}: {r['status']} type={r['type']}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(text)
    print(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "report" and getattr(args, "engine", "auto") != "auto":
        os.environ["VERTGAME_ENGINE"] = args.engine
    try:
        if args.command == "solve":
            return run_solve(args)
        if args.command == "best-response":
            return run_best_response(args)
        if args.command == "simulate":
            return run_simulate(args)
        if args.command == "stationary":
            return run_stationary(args)
        if args.command == "chain":
            return run_chain(args)
        if args.command == "sweep":
            return run_sweep(args)
        if args.command == "integrate":
            return run_integrate(args)
        if args.command == "report":
            return run_report(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGE
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
