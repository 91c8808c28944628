#!/usr/bin/env python3
"""One pass over the three benchmark cases at desk scale.

Each run follows the 50-step protocol with the last 40 steps averaged and
leaves a CSV/JSON report pair in the output directory.
"""

import argparse
import sys

from lesbench import harness
from lesbench.stepper import SimConfig

DESK_RUNS = [
    dict(case="cavity", grid=(64, 64, 64)),
    dict(case="tgv", grid=(64, 64, 64)),
    dict(case="wave", grid=(640, 20, 16)),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="reports")
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--window", type=int, default=40)
    ap.add_argument("--topology", default="1,1,1")
    args = ap.parse_args()
    topology = tuple(int(v) for v in args.topology.split(","))

    for run in DESK_RUNS:
        cfg = SimConfig(steps=args.steps, window=args.window,
                        topology=topology, **run)
        print(f"== {run['case']} {run['grid']}")
        result = harness.run_benchmark(cfg)
        rep = result.report
        harness.write_report(rep, args.out,
                             f"{rep.case}_n{rep.n_workers}")
        avg = rep.averages()
        frac = rep.breakdown_fractions()
        print(f"   T_TT={avg['T_TT']:.4f}s  breakdown "
              f"LS={frac['T_LS']:.0%} CD={frac['T_CD']:.0%} "
              f"P={frac['T_P']:.0%} up={frac['T_up']:.0%}  "
              f"comm={rep.comm_fraction():.1%}")
        print(f"   max|div u| = {result.final_divergence:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
