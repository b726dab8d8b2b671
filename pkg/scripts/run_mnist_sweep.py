#!/usr/bin/env python3
"""MNIST decay-factor sweep: 50-20-10 MLP, one run per beta plus warm-up.

Protocol: lr 1e-3, weight decay 1e-4, momentum 0.9, batch 100, 100 epochs,
betas {1, 0.5, 0.1, 0.01, 0.001}, warm-up 0.01 -> 0.1 over 6000 iterations
(10 epochs).  Expects the four IDX files under data/mnist (or pass
--mnist-dir).  Roughly ten minutes on a laptop CPU; writes summary.csv,
per-beta reliability/confidence-table/metrics CSVs under results/mnist_sweep.
"""

import sys

from gradient_decay.cli import main

ARGS = [
    "sweep",
    "--dataset", "mnist",
    "--model", "50,20,10",
    "--betas", "1,0.5,0.1,0.01,0.001",
    "--beta-initial", "0.01",
    "--beta-end", "0.1",
    "--warmup-iters", "6000",
    "--lr", "1e-3",
    "--momentum", "0.9",
    "--weight-decay", "1e-4",
    "--epochs", "100",
    "--batch", "100",
    "--seed", "0",
    "--out", "results/mnist_sweep",
]

if __name__ == "__main__":
    sys.exit(main(ARGS + sys.argv[1:]))
