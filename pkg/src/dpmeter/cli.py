"""Command-line entry points.

Subcommands mirror the pipeline stages: ``synth`` emits a meter panel,
``privatize`` a noised aggregate, ``forecast`` a day-ahead forecast,
``scenarios`` calibrated error paths, ``procure`` solves one procurement
instance, ``experiment`` runs the full grid, and ``report`` re-emits the
plot-ready tables from a saved result table.  Exit code 0 means every cell
succeeded.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .domain import SettlementScheme, compute_dlc, read_meter_csv, write_meter_csv
from .experiment import (
    ExperimentConfig,
    load_config,
    read_results_csv,
    report,
    run_experiment,
    write_results_csv,
)
from .forecast import TrainConfig, forecast_scheme, save_model
from .metrics import WapeScore
from .privacy import PrivacyParams, privatize_aggregate
from .procurement import build_milp, read_instance, solve
from .scenario import generate_scenarios, read_scenario_csv, write_scenario_csv
from .synth import SynthConfig, generate_panel, kmeans_groups, write_group_csv


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_meters=args.meters, n_weeks=args.weeks, pv_fraction=args.pv,
        ev_fraction=args.ev, seed=args.seed,
    )
    panel = generate_panel(cfg)
    out = _out_dir(args)
    write_meter_csv(panel, out / "meters.csv")
    if args.kmeans:
        groups = kmeans_groups(panel, args.kmeans, args.seed)
        write_group_csv(groups, out / "groups.csv")
        for g in groups:
            print(f"group {g.label}: {len(g.meter_ids)} meters, kld={g.kld_vs_system.value:.6g}")
    print(f"wrote {out / 'meters.csv'} ({panel.n_meters} meters x {panel.n_periods} periods)")
    return 0


def cmd_privatize(args) -> int:
    panel = read_meter_csv(args.input)
    params = PrivacyParams(args.epsilon, args.gamma)
    noisy = privatize_aggregate(panel, params, args.seed)
    out = _out_dir(args)
    path = out / "aggregate_noisy.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period_index", "kwh_noisy"])
        for i, v in enumerate(noisy.values):
            writer.writerow([noisy.start + i, repr(float(v))])
    print(f"wrote {path}")
    return 0


def _scheme_from_args(args) -> SettlementScheme:
    if args.scheme == "hhs-ddp":
        return SettlementScheme.hhs_ddp(PrivacyParams(args.epsilon, args.gamma))
    return SettlementScheme(args.scheme)


def cmd_forecast(args) -> int:
    panel = read_meter_csv(args.input)
    dlc = compute_dlc(panel)
    cfg = TrainConfig(epochs=args.epochs)
    result = forecast_scheme(_scheme_from_args(args), panel, dlc, cfg, args.seed)
    out = _out_dir(args)
    path = out / "forecast.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period_index", "kwh"])
        for i, v in enumerate(result.forecast.values):
            writer.writerow([result.forecast.start + i, repr(float(v))])
    save_model(result.model, out / "model.txt")
    print(f"wrote {path}; backtest wape={result.wape_backtest.value:.6g}")
    return 0


def cmd_scenarios(args) -> int:
    with open(args.forecast, newline="") as fh:
        rows = list(csv.DictReader(fh))
    forecast = np.array([float(r["kwh"]) for r in rows])
    scen = generate_scenarios(forecast, WapeScore(args.wape), args.count, args.seed)
    out = _out_dir(args)
    write_scenario_csv(scen, out / "scenarios.csv")
    print(f"wrote {out / 'scenarios.csv'} ({args.count} scenarios)")
    return 0


def cmd_procure(args) -> int:
    inst = read_instance(args.instance)
    sol = solve(build_milp(inst), tol=args.tol)
    if sol.status != "optimal":
        print(f"infeasible: {sol.infeasible_row}", file=sys.stderr)
        return 1
    out = _out_dir(args)
    with open(out / "solution_da.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "d_da_mwh", "price_da"])
        for t in range(inst.n_periods):
            writer.writerow([t, repr(float(sol.d_da[t])), repr(float(sol.price_da[t]))])
    with open(out / "solution_bal.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "t", "d_bal_mwh", "price_bal"])
        for s in range(inst.n_scenarios):
            for t in range(inst.n_periods):
                writer.writerow(
                    [s, t, repr(float(sol.d_bal[s, t])), repr(float(sol.price_bal[s, t]))]
                )
    with open(out / "solution_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["objective", "expected_cost", "cvar", "gap"])
        writer.writerow([repr(sol.objective), repr(sol.expected_cost), repr(sol.cvar), repr(sol.gap)])
    print(
        f"objective={sol.objective:.6g} expected={sol.expected_cost:.6g} "
        f"cvar={sol.cvar:.6g} gap={sol.gap:.3g}"
    )
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seeds": (args.seed,)})
    results, failures = run_experiment(cfg)
    out = _out_dir(args)
    if results:
        report(results, out, cfg)
        print(f"wrote {len(results)} rows to {out}")
    for f in failures:
        print(f"FAILED {f}", file=sys.stderr)
    return 1 if failures else 0


def cmd_report(args) -> int:
    results = read_results_csv(args.results)
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    written = report(results, _out_dir(args), cfg)
    print("wrote " + ", ".join(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmeter",
        description="Privacy-preserving smart meter data valuation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0, help="deterministic run seed")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic meter panel")
    add_common(p)
    p.add_argument("--meters", type=int, default=200)
    p.add_argument("--weeks", type=int, default=8)
    p.add_argument("--pv", type=float, default=0.5, help="PV fraction")
    p.add_argument("--ev", type=float, default=0.5, help="EV fraction")
    p.add_argument("--kmeans", type=int, default=0, help="also write k groups")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("privatize", help="noised aggregate of a meter panel")
    add_common(p)
    p.add_argument("--input", required=True, help="meter CSV path")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=cmd_privatize)

    p = sub.add_parser("forecast", help="day-ahead forecast under a scheme")
    add_common(p)
    p.add_argument("--input", required=True, help="meter CSV path")
    p.add_argument(
        "--scheme",
        required=True,
        choices=["nhhs", "hhs-dlcsys", "hhs-ehh", "hhs-ddp"],
    )
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=80)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("scenarios", help="sample forecast-error scenarios")
    add_common(p)
    p.add_argument("--forecast", required=True, help="forecast CSV path")
    p.add_argument("--wape", type=float, required=True)
    p.add_argument("--count", type=int, default=50)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("procure", help="solve a procurement instance file")
    add_common(p)
    p.add_argument("--instance", required=True, help="instance JSON path")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_procure)

    p = sub.add_parser("experiment", help="run the full scheme/grid experiment")
    p.add_argument("--seed", type=int, default=None, help="override config seeds")
    p.add_argument("--out", default="out")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-emit report tables from results.csv")
    add_common(p)
    p.add_argument("--results", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
