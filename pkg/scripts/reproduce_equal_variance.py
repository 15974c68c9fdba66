#!/usr/bin/env python3
"""Full-scale equal-variance coverage/risk experiment: k in {4, 10, 20},
100-point true-shrinkage grid, 1000 replications per gridpoint, with
exact/ADM/MLE intervals.  Writes simulation.csv/json plus the per-figure
tables into --out."""

import argparse
import sys

from shrinkfit.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/equal_variance")
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20110607)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()
    argv = [
        "simulate", "--preset", "equal",
        "--k", "4", "--k", "10", "--k", "20",
        "--reps", str(args.reps), "--seed", str(args.seed),
        "--out", args.out, "--emit-plotdata",
    ]
    if args.threads is not None:
        argv += ["--threads", str(args.threads)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
