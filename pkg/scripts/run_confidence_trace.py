#!/usr/bin/env python3
"""Per-sample confidence dynamics under a small decay factor.

Trains once on overlapping blobs at beta=0.01, tracks every training
sample's true-class probability per epoch, and splits samples into five
difficulty groups by early-training confidence.  group_means.csv shows the
curriculum-style separation: easy groups saturate first while hard groups
lag.  Rerun with --beta 1 to see the much flatter standard-softmax version.
"""

import sys

from gradient_decay.cli import main

ARGS = [
    "trace",
    "--dataset", "blobs",
    "--blob-classes", "10",
    "--blob-per-class", "50",
    "--blob-sigma", "0.3",
    "--blob-seed", "42",
    "--model", "64,10",
    "--beta", "0.01",
    "--groups", "5",
    "--lr", "0.05",
    "--momentum", "0.9",
    "--weight-decay", "0",
    "--epochs", "120",
    "--batch", "100",
    "--seed", "7",
    "--out", "results/trace_beta_0.01",
]

if __name__ == "__main__":
    sys.exit(main(ARGS + sys.argv[1:]))
