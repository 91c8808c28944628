"""Command-line front end: run benchmarks, tabulate scaling, self-test."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import LesbenchError
from .schemes import SCHEMES
from .stepper import SimConfig


def _parse_triple(text: str, kind=int):
    parts = [kind(p) for p in text.replace("x", ",").split(",") if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"need three values, got {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesbench",
        description="Structured-grid incompressible LES benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one benchmark configuration")
    run.add_argument("--case", choices=("cavity", "tgv", "wave"),
                     default="cavity")
    run.add_argument("--grid", type=_parse_triple, default=None,
                     metavar="NX,NY,NZ")
    run.add_argument("--topology", type=_parse_triple, default=(1, 1, 1),
                     metavar="TX,TY,TZ")
    run.add_argument("--scheme", choices=SCHEMES, default=None)
    run.add_argument("--steps", type=int, default=50)
    run.add_argument("--window", type=int, default=40)
    run.add_argument("--config", default=None,
                     help="JSON file with SimConfig fields (flags win)")
    run.add_argument("--out", default="reports",
                     help="directory for the CSV/JSON report pair")
    run.add_argument("--transport", choices=("inproc", "socket"),
                     default=None,
                     help="worker transport (default: env or inproc)")

    scale = sub.add_parser("scale",
                           help="combine run reports into a scaling table")
    scale.add_argument("--inputs", nargs="+", required=True,
                       metavar="REPORT.json")
    scale.add_argument("--baseline", choices=("first", "serial"),
                       default="first")
    scale.add_argument("--out", default="scaling.csv")

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _config_from_args(args) -> SimConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    cli = dict(case=args.case, grid=args.grid, topology=args.topology,
               scheme=args.scheme, steps=args.steps, window=args.window)
    for key, val in cli.items():
        if val is not None:
            data[key] = val
    data.setdefault("topology", (1, 1, 1))
    transport = args.transport or harness.transport_from_env()
    data["transport"] = transport
    return SimConfig.from_dict(data)


def cmd_run(args) -> int:
    config = _config_from_args(args)
    result = harness.run_benchmark(config)
    report = result.report
    stem = f"{report.case}_n{report.n_workers}"
    csv_path, json_path = harness.write_report(report, args.out, stem)
    avg = report.averages()
    print(f"case={report.case} grid={report.grid} workers={report.n_workers}"
          f" scheme={report.scheme}")
    print(f"T_TT={avg['T_TT']:.4f}s  T_LS={avg['T_LS']:.4f}s "
          f"T_CD={avg['T_CD']:.4f}s  T_P={avg['T_P']:.4f}s "
          f"T_up={avg['T_up']:.4f}s  comm={avg['comm']:.4f}s")
    print(f"post-run max|div u| = {result.final_divergence:.3e}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_scale(args) -> int:
    reports = [harness.read_report(p) for p in args.inputs]
    rows = harness.scaling_table(reports, baseline=args.baseline)
    harness.write_scaling_csv(rows, args.out)
    for row in rows:
        print(f"n={row['n']:>4}  T_n={row['T_n']:.4f}s  S_n={row['S_n']:.2f}"
              f"  E_literal={row['E_literal']:.3f}"
              f"  E_normalized={row['E_normalized']:.3f}")
    print(f"wrote {args.out}")
    return 0


def cmd_selftest(_args) -> int:
    from .selftest import run_selftest
    return 0 if run_selftest() else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "scale": cmd_scale, "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except LesbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
