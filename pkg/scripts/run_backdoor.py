#!/usr/bin/env python3
"""Backdoor poisoning / purification experiment.

Uses MNIST when configs/backdoor_mnist.toml's mnist_dir exists, otherwise
the synthetic fallback config.
"""
import argparse
import os
import sys

from purifynet.cli import main as cli_main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/backdoor")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mnist-dir", default=os.environ.get("PURIFYNET_MNIST_DIR"))
    args = ap.parse_args()
    cfg = "configs/backdoor_synthetic.toml"
    extra = []
    if args.mnist_dir and os.path.isdir(args.mnist_dir):
        cfg = "configs/backdoor_mnist.toml"
        extra = ["--mnist-dir", args.mnist_dir]
    sys.exit(cli_main(["backdoor", "--config", cfg, "--out", args.out,
                       "--seed", str(args.seed)] + extra))
