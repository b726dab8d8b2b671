#!/usr/bin/env python3
"""Calibration-vs-decay experiment on over-parameterized blobs.

Ten overlapping Gaussian classes (sigma 0.3 on a unit circle), a 256-unit
hidden layer, 400 epochs without weight decay: small decay factors drive the
test-set confidence far above accuracy, large ones pull it back down.
Expected direction in results/blobs_calibration/summary.csv: mean_conf
decreases as beta grows and ECE at beta=20 sits below ECE at beta=0.1.
Runs in well under a minute.
"""

import sys

from gradient_decay.cli import main

ARGS = [
    "sweep",
    "--dataset", "blobs",
    "--blob-classes", "10",
    "--blob-per-class", "50",
    "--blob-sigma", "0.3",
    "--blob-radius", "1.0",
    "--blob-seed", "42",
    "--model", "256,10",
    "--betas", "0.1,1,5,20",
    "--lr", "0.05",
    "--momentum", "0.9",
    "--weight-decay", "0",
    "--epochs", "400",
    "--batch", "100",
    "--seed", "7",
    "--out", "results/blobs_calibration",
]

if __name__ == "__main__":
    sys.exit(main(ARGS + sys.argv[1:]))
