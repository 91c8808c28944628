#!/usr/bin/env python3
"""Strong-scaling study: lid-driven cavity at fixed size, growing workers.

Runs the cavity benchmark once per worker topology, writes the per-run
CSV/JSON reports and the combined scaling table. On an eight-core host the
default settings reproduce the acceptance criterion (monotone runtime,
S_8 >= 3); smaller hosts can pass --grid 64,64,64 --topologies 1,2 for a
quick look.
"""

import argparse
import os
import sys

from lesbench import harness
from lesbench.stepper import SimConfig

TOPOLOGIES = {
    1: (1, 1, 1),
    2: (2, 1, 1),
    4: (2, 2, 1),
    8: (2, 2, 2),
}


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", default="128,128,128")
    ap.add_argument("--topologies", default="1,2,4,8",
                    help="comma list of worker counts (1, 2, 4, 8)")
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--window", type=int, default=40)
    ap.add_argument("--out", default="reports/scaling")
    ap.add_argument("--socket", action="store_true",
                    help="run workers as separate processes over TCP")
    return ap.parse_args()


def main():
    args = parse_args()
    grid = tuple(int(v) for v in args.grid.split(","))
    counts = [int(v) for v in args.topologies.split(",")]
    transport = "socket" if args.socket else "inproc"
    os.makedirs(args.out, exist_ok=True)

    reports = []
    for n in counts:
        topo = TOPOLOGIES[n]
        cfg = SimConfig(case="cavity", grid=grid, topology=topo,
                        steps=args.steps, window=args.window,
                        transport=transport)
        print(f"== cavity {grid} on {n} worker(s) {topo} [{transport}]")
        result = harness.run_benchmark(cfg)
        rep = result.report
        reports.append(rep)
        harness.write_report(rep, args.out, f"cavity_n{n}")
        avg = rep.averages()
        print(f"   T_TT={avg['T_TT']:.4f}s  comm={avg['comm']:.4f}s  "
              f"max|div u|={result.final_divergence:.2e}")

    rows = harness.scaling_table(reports, baseline="serial"
                                 if counts[0] == 1 else "first")
    path = harness.write_scaling_csv(rows, os.path.join(args.out,
                                                        "scaling.csv"))
    print(f"\n n    T_n [s]     S_n    E_literal  E_normalized")
    for row in rows:
        print(f"{row['n']:>2}  {row['T_n']:.5f}  {row['S_n']:6.2f}  "
              f"{row['E_literal']:9.3f}  {row['E_normalized']:9.3f}")
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
