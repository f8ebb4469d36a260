#!/usr/bin/env python3
"""Sweep the fairness parameter for the rate-budget case.

Solves the rate allocation for the five benchmark plants at budget R = 2
across a q sweep and prints the allocated rates, per-sensor costs, total
cost, entropy, and cost spread (the trend data behind the per-sensor bar and
fairness-curve figures).

Usage: python3 scripts/rate_sweep.py [--budget 2.0] [--q 0 --q 2 ...] [--out CSV]
"""

import argparse
import csv
import sys
import time

import numpy as np

from fairsched.harness import entropy_measure
from fairsched.models import FairnessParam, steady_state
from fairsched.presets import case1_systems
from fairsched.rate import SolverConfig, rate_cost, solve_rate_allocation


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--budget", type=float, default=2.0)
    parser.add_argument("--q", type=float, action="append")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="optional CSV output path")
    args = parser.parse_args(argv)

    q_values = args.q or [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
    models = case1_systems()
    caches = [steady_state(m) for m in models]
    N = len(models)

    rows = []
    print(f"{'q':>6} " + " ".join(f"{f'r_{i + 1}':>8}" for i in range(N))
          + f" {'total':>9} {'entropy':>9} {'spread':>8} {'secs':>6}")
    for q in q_values:
        fp = FairnessParam(q)
        t0 = time.time()
        r, trace = solve_rate_allocation(
            models, args.budget, fp, SolverConfig(seed=args.seed), caches=caches
        )
        if not trace.converged:
            print(f"solver did not converge at q={q}", file=sys.stderr)
            return 2
        secs = time.time() - t0
        J = np.array([rate_cost(ri, c) for ri, c in zip(r, caches)])
        total = float(J.sum())
        entropy = entropy_measure(J)
        spread = float(J.max() - J.min())
        print(f"{q:>6g} " + " ".join(f"{ri:>8.4f}" for ri in r)
              + f" {total:>9.3f} {entropy:>9.4f} {spread:>8.3f} {secs:>6.1f}")
        rows.append(
            [q] + [repr(float(ri)) for ri in r] + [repr(float(j)) for j in J]
            + [repr(total), repr(entropy), repr(spread)]
        )

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["q"] + [f"r_{i + 1}" for i in range(N)]
                + [f"J_{i + 1}" for i in range(N)]
                + ["total", "entropy_bits", "spread"]
            )
            writer.writerows(rows)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
