"""From-scratch MLP trainer with manual backpropagation.

Rectifier hidden layers, identity output layer, mini-batch gradient descent
with momentum, weight decay and optional global gradient-norm clipping.
A single run is fully deterministic given its config: initialization and
shuffling derive from the seed alone, so two identical runs produce
bitwise-identical metric streams.

The trainer records the true-class probability of every (traced) training
sample after each epoch; difficulty_groups splits those traces into
quantile groups by early-training confidence, hardest group first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from gradient_decay.loss import LossParams, beta_ce_batch
from gradient_decay.schedule import Granularity, WarmupSchedule
from gradient_decay.datasets import Dataset

__all__ = [
    "MlpModel",
    "TrainConfig",
    "EpochMetrics",
    "SampleTraces",
    "DifficultyGroups",
    "TrainResult",
    "TrainingDiverged",
    "train",
    "difficulty_groups",
    "clip_global_norm",
    "write_metrics_csv",
    "write_trace_csv",
]

# trace every sample by default up to this dataset size
_TRACE_LIMIT = 100_000


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch and batch index."""

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


@dataclass
class MlpModel:
    """Affine-rectifier chain; the final layer is affine only."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]   # (fan_out,) per layer

    @classmethod
    def init(cls, layer_dims, seed: int) -> "MlpModel":
        """He-normal weights (std sqrt(2/fan_in)), zero biases, seeded."""
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims needs at least (input, output) positive sizes, got {dims}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a single sample (dim,) or a batch (n, dim)."""
        a = np.asarray(x, dtype=np.float64)
        expect = self.layer_dims[0]
        if a.shape[-1] != expect:
            raise ValueError(f"input dimension {a.shape[-1]} does not match model ({expect})")
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ W + b, 0.0)
        return a @ self.weights[-1] + self.biases[-1]

    def _forward_cached(self, X: np.ndarray):
        acts = [X]
        a = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ W + b, 0.0)
            acts.append(a)
        return a @ self.weights[-1] + self.biases[-1], acts


def _loss_and_grads(model: MlpModel, X, y, params: LossParams):
    """Mean loss over the batch and parameter gradients of that mean."""
    logits, acts = model._forward_cached(X)
    be = beta_ce_batch(logits, y, params)
    n = X.shape[0]
    delta = be.grads / n
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)
    return float(be.losses.mean()), grads_w, grads_b


def backward(model: MlpModel, x, c: int, params: LossParams):
    """Parameter gradients of the loss for one sample.

    Returns (weight_grads, bias_grads), lists parallel to the model layers.
    """
    X = np.asarray(x, dtype=np.float64).reshape(1, -1)
    _, gw, gb = _loss_and_grads(model, X, np.asarray([c]), params)
    return gw, gb


def clip_global_norm(grads_w, grads_b, clip_norm: float):
    """Scale all gradients so their joint 2-norm is at most clip_norm."""
    sq = sum(float((g**2).sum()) for g in grads_w) + sum(float((g**2).sum()) for g in grads_b)
    norm = math.sqrt(sq)
    if norm > clip_norm:
        scale = clip_norm / norm
        grads_w = [g * scale for g in grads_w]
        grads_b = [g * scale for g in grads_b]
    return grads_w, grads_b, norm


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    batch_size: int = 100
    epochs: int = 1
    clip_norm: float | None = None
    seed: int = 0
    lr_drops: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum!r}")
        if not self.weight_decay >= 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm!r}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    beta: float
    train_loss: float
    train_acc: float
    test_acc: float
    mean_conf: float


@dataclass
class SampleTraces:
    """p_true of each traced sample after every epoch."""

    p_true: np.ndarray      # (epochs, n_traced)
    sample_ids: np.ndarray  # (n_traced,)
    groups: np.ndarray | None = None  # 1 = hardest .. k = easiest

    @property
    def epochs(self) -> int:
        return self.p_true.shape[0]


@dataclass
class TrainResult:
    model: MlpModel
    metrics: list[EpochMetrics]
    traces: SampleTraces | None


@dataclass(frozen=True)
class DifficultyGroups:
    assignment: np.ndarray   # (n,) group index in [1, k]
    group_means: np.ndarray  # (k, epochs) mean p_true per group per epoch


def train(
    model: MlpModel,
    train_set: Dataset,
    cfg: TrainConfig,
    loss: LossParams,
    warmup: WarmupSchedule | None = None,
    test_set: Dataset | None = None,
    trace: bool = True,
) -> TrainResult:
    """Mini-batch gradient descent with momentum.

    Update rule: v <- momentum*v + g, param <- param - lr*(v + weight_decay*param),
    with g optionally clipped to a global norm first.  When a warm-up schedule
    is given it overrides loss.beta per iteration (or per epoch).
    """
    n = train_set.n
    if n == 0:
        raise ValueError("training set is empty")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")

    X, y = train_set.features, train_set.labels
    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    drop_at = {int(frac * cfg.epochs): factor for frac, factor in cfg.lr_drops}
    lr = cfg.lr

    if trace and n > _TRACE_LIMIT:
        traced_ids = np.linspace(0, n - 1, _TRACE_LIMIT).astype(np.int64)
    else:
        traced_ids = np.arange(n, dtype=np.int64)
    trace_mat = np.zeros((cfg.epochs, traced_ids.size)) if trace else None

    metrics: list[EpochMetrics] = []
    step = 0
    beta_now = loss.beta
    for epoch in range(cfg.epochs):
        if epoch in drop_at:
            lr *= drop_at[epoch]
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if warmup is not None:
                t = step if warmup.granularity is Granularity.PER_ITERATION else epoch
                beta_now = warmup.beta_at(t)
                params = LossParams(beta=beta_now, tau=loss.tau, stability=loss.stability)
            else:
                params = loss
            try:
                batch_loss, gw, gb = _loss_and_grads(model, X[idx], y[idx], params)
            except (ValueError, OverflowError) as exc:
                # exploded parameters produce non-finite logits one step later
                raise TrainingDiverged(epoch, start // cfg.batch_size) from exc
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(epoch, start // cfg.batch_size)
            loss_sum += batch_loss * idx.size
            if cfg.clip_norm is not None:
                gw, gb, _ = clip_global_norm(gw, gb, cfg.clip_norm)
            for layer in range(len(model.weights)):
                vel_w[layer] = cfg.momentum * vel_w[layer] + gw[layer]
                vel_b[layer] = cfg.momentum * vel_b[layer] + gb[layer]
                model.weights[layer] -= lr * (vel_w[layer] + cfg.weight_decay * model.weights[layer])
                model.biases[layer] -= lr * (vel_b[layer] + cfg.weight_decay * model.biases[layer])
            step += 1

        train_logits = model.forward(X)
        try:
            be = beta_ce_batch(train_logits, y, LossParams(beta=beta_now, tau=loss.tau, stability=loss.stability))
        except (ValueError, OverflowError) as exc:
            raise TrainingDiverged(epoch, (n - 1) // cfg.batch_size) from exc
        train_acc = float((train_logits.argmax(axis=1) == y).mean())
        mean_conf = float(be.p_true.mean())
        if trace_mat is not None:
            trace_mat[epoch] = be.p_true[traced_ids]
        if test_set is not None:
            test_acc = float((model.forward(test_set.features).argmax(axis=1) == test_set.labels).mean())
        else:
            test_acc = float("nan")
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                beta=beta_now,
                train_loss=loss_sum / n,
                train_acc=train_acc,
                test_acc=test_acc,
                mean_conf=mean_conf,
            )
        )

    traces = SampleTraces(trace_mat, traced_ids) if trace_mat is not None else None
    return TrainResult(model=model, metrics=metrics, traces=traces)


def difficulty_groups(traces: SampleTraces, k: int = 5) -> DifficultyGroups:
    """Quantile groups by mean confidence over the first 20% of epochs.

    Group 1 collects the lowest-confidence ("hard") samples, group k the
    easiest; ties break by sample id.  Also fills traces.groups.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    n = traces.sample_ids.size
    if n < k:
        raise ValueError(f"need at least {k} traced samples, got {n}")
    early = max(1, math.ceil(0.2 * traces.epochs))
    score = traces.p_true[:early].mean(axis=0)
    order = np.lexsort((traces.sample_ids, score))
    assignment = np.zeros(n, dtype=np.int64)
    group_means = np.zeros((k, traces.epochs))
    for j, chunk in enumerate(np.array_split(order, k)):
        assignment[chunk] = j + 1
        group_means[j] = traces.p_true[:, chunk].mean(axis=1)
    traces.groups = assignment
    return DifficultyGroups(assignment=assignment, group_means=group_means)


def write_metrics_csv(path, metrics: list[EpochMetrics]) -> None:
    """epoch, beta, train_loss, train_acc, test_acc, mean_conf per row."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "beta", "train_loss", "train_acc", "test_acc", "mean_conf"])
        for m in metrics:
            w.writerow([m.epoch, repr(m.beta), repr(m.train_loss), repr(m.train_acc),
                        repr(m.test_acc), repr(m.mean_conf)])


def write_trace_csv(path, traces: SampleTraces) -> None:
    """epoch, sample_id, p_true, group per row (group blank if unassigned)."""
    groups = traces.groups
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "sample_id", "p_true", "group"])
        for epoch in range(traces.epochs):
            for j, sid in enumerate(traces.sample_ids):
                w.writerow([epoch, sid, repr(float(traces.p_true[epoch, j])),
                            "" if groups is None else int(groups[j])])
