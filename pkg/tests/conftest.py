import os
from pathlib import Path

import pytest

# Real MNIST IDX files are looked up here for the desk-scale experiment
# tests; everything else runs on synthetic data.
MNIST_ENV = "GRADIENT_DECAY_MNIST_DIR"
DEFAULT_MNIST_DIR = Path(__file__).resolve().parents[1] / "data" / "mnist"


def mnist_dir() -> Path | None:
    d = Path(os.environ.get(MNIST_ENV, DEFAULT_MNIST_DIR))
    names = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    if all((d / n).exists() or (d / (n + ".gz")).exists() for n in names):
        return d
    return None


requires_mnist = pytest.mark.skipif(
    mnist_dir() is None,
    reason=f"MNIST IDX files not found (set {MNIST_ENV} or place them under data/mnist); "
    "they cannot be fetched in an offline environment",
)
