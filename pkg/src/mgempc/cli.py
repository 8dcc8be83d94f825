"""Command-line surface: run, compare, oracle, check, synth.

Every report path writes delimited output plus rendered figures into the
output directory.  Exit codes: 0 success, 1 runtime failure, 2 usage
error.  Money is rounded to cents only in printed tables; files keep
full precision.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import data_io, guarantees, plots
from .controllers import CASES, METHODS
from .errors import DataError, InputError, SolveError
from .harness import (
    oracle_full_window,
    run_closed_loop,
    run_single_method,
    write_cost_summary,
    write_log_csv,
)

COST_ROWS = ("ncdc", "opdc", "energy_cost", "bess_loss_cost", "total")
COST_LABELS = {
    "ncdc": "NCDC",
    "opdc": "OPDC",
    "energy_cost": "Energy Cost",
    "bess_loss_cost": "BESS loss",
    "total": "Total Cost",
}


def _add_common(p):
    p.add_argument("--config", help="scenario config file (INI); defaults used if omitted")
    p.add_argument("--data", help="data CSV (timestamp,pv_kw,load_kw[,energy_rate]); synthetic if omitted")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--ncdc-only", action="store_true", help="zero the on-peak demand rate")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgempc",
        description="Economic MPC microgrid dispatch simulator with demand-charge peak states",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="closed-loop simulation of one controller")
    _add_common(p)
    p.add_argument("--method", choices=METHODS, help="controller to run (overrides config)")
    p.add_argument("--case", choices=CASES, help="reference terminal case (overrides config)")

    p = sub.add_parser("compare", help="cost table across methods and cases")
    _add_common(p)
    p.add_argument("--methods", default="std_ref,choice1,choice2", help="comma-separated methods")
    p.add_argument("--cases", default="i", help="comma-separated cases")

    p = sub.add_parser("oracle", help="full-window perfect-foresight benchmark")
    _add_common(p)

    p = sub.add_parser("check", help="run a proposed controller and certify its guarantees")
    _add_common(p)
    p.add_argument("--method", choices=("choice1", "choice2", "choice3"), default="choice2")
    p.add_argument("--case", choices=CASES, help="reference terminal case")

    p = sub.add_parser("synth", help="write the deterministic synthetic data CSV")
    p.add_argument("--days", type=int, default=31)
    p.add_argument("--dt", type=float, default=0.25, help="step duration in hours")
    p.add_argument("--start", default="2019-01-01T00:00")
    p.add_argument("--out", required=True, help="output CSV path")

    return parser


def _scenario(args, method=None, case=None):
    cfg = data_io.load_config(args.config)
    bundle = data_io.load_data(args.data) if args.data else None
    return data_io.make_scenario(
        cfg, bundle, method=method, case=case, ncdc_only=args.ncdc_only
    )


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_costs(costs: dict):
    methods = list(costs)
    width = max(12, *(len(m) for m in methods)) + 2
    print("cost [$]".ljust(14) + "".join(m.rjust(width) for m in methods))
    for row in COST_ROWS:
        cells = "".join(f"{costs[m].as_dict()[row]:>{width},.2f}" for m in methods)
        print(COST_LABELS[row].ljust(14) + cells)


def cmd_run(args) -> int:
    spec = _scenario(args, method=args.method, case=args.case)
    out = _outdir(args)
    if spec.proposed is None:
        log = run_single_method(spec)
        costs = {log.method: log.cost()}
    else:
        log = run_closed_loop(spec)
        costs = {log.ref_method: log.ref_cost(), log.method: log.cost()}
    write_log_csv(log, out / "simulation.csv")
    write_cost_summary(costs, out / "costs.json")
    if not args.no_figures:
        plots.figure_dispatch(log, out / "dispatch.png")
    _print_costs(costs)
    print(f"wrote {out / 'simulation.csv'}")
    return 0


def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    cases = [c.strip() for c in args.cases.split(",") if c.strip()]
    if not methods or not cases:
        raise InputError("compare needs at least one method and one case")
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}")
    for c in cases:
        if c not in CASES:
            raise InputError(f"unknown case {c!r}")
    out = _outdir(args)
    table = {}
    for c in cases:
        for m in methods:
            spec = _scenario(args, method=m, case=c)
            if spec.proposed is None:
                log = run_single_method(spec)
            else:
                log = run_closed_loop(spec)
            table[(m, c)] = log.cost()
            print(f"done: {m} case {c}: total {table[(m, c)].total:,.2f}")
    cols = list(table)
    with open(out / "comparison.csv", "w") as f:
        f.write("cost," + ",".join(f"{m} ({c})" for m, c in cols) + "\n")
        for row in COST_ROWS:
            f.write(
                COST_LABELS[row]
                + ","
                + ",".join(repr(table[k].as_dict()[row]) for k in cols)
                + "\n"
            )
    if not args.no_figures:
        plots.figure_cost_comparison(table, out / "comparison.png")
    for c in cases:
        print(f"-- case ({c}) --")
        _print_costs({m: table[(m, c)] for m in methods})
    print(f"wrote {out / 'comparison.csv'}")
    return 0


def cmd_oracle(args) -> int:
    # The oracle ignores controllers; a reference method keeps the spec single-system.
    spec = _scenario(args, method="std_ref")
    out = _outdir(args)
    breakdown, result = oracle_full_window(spec)
    write_cost_summary({"oracle": breakdown}, out / "oracle_costs.json")
    T = spec.window.length_T
    with open(out / "oracle.csv", "w") as f:
        f.write("step,u1,u2,soc,x2,x3\n")
        for i in range(T):
            f.write(
                f"{i},{float(result.u[i, 0])!r},{float(result.u[i, 1])!r},"
                f"{float(result.states[i + 1, 0])!r},{float(result.states[i + 1, 1])!r},"
                f"{float(result.states[i + 1, 2])!r}\n"
            )
    if not args.no_figures:
        net = -spec.series.c[spec.window.start_step : spec.window.start_step + T]
        plots.figure_oracle(result.u[:, 1], net, spec.tariff.dt_hours, out / "oracle.png")
    _print_costs({"oracle": breakdown})
    print(f"wrote {out / 'oracle.csv'}")
    return 0


def cmd_check(args) -> int:
    spec = _scenario(args, method=args.method, case=args.case)
    out = _outdir(args)
    log = run_closed_loop(spec)
    report = guarantees.build_report(log)
    write_log_csv(log, out / "simulation.csv")
    guarantees.write_report_csv(report, out / "guarantees.csv")
    if not args.no_figures:
        plots.figure_guarantees(report, out / "guarantees.png")
    ok = True
    for line in report.summary_lines():
        print(line)
        ok = ok and ("FAIL" not in line)
    print(f"wrote {out / 'guarantees.csv'}")
    return 0 if ok else 1


def cmd_synth(args) -> int:
    bundle = data_io.synth_month(args.days, args.dt, args.start)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    data_io.write_data_csv(bundle, out)
    print(f"wrote {out} ({len(bundle)} rows)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "compare": cmd_compare,
        "oracle": cmd_oracle,
        "check": cmd_check,
        "synth": cmd_synth,
    }
    try:
        return handlers[args.command](args)
    except (DataError, InputError, SolveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
