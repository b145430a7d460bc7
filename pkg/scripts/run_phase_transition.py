#!/usr/bin/env python3
"""Recovery-error phase transition sweep (error vs corruption rate).

Writes results.csv/aggregate.csv under --out; plot with the frontend:
    node frontend/dist/cli.js recovery --csv <out>/results.csv --series k
"""
import argparse
import sys

from purifynet.cli import main as cli_main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/phase")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=20)
    args = ap.parse_args()
    sys.exit(cli_main([
        "sweep", "--config", "configs/phase_transition.toml",
        "--out", args.out, "--seed", str(args.seed), "--trials", str(args.trials),
    ]))
