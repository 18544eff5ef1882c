"""SGD-with-momentum training of a single TRL as a softmax classifier.

The trainer is deliberately small: raw image tensors go straight through
one tensor regression layer, the loss is softmax cross-entropy, and the
optimizer is classical (heavy-ball) momentum

    v <- momentum * v + g        p <- p - lr * v

applied to every factor array and the bias.  Everything is driven by one
seeded generator (initialization, then epoch shuffles), so a fixed config
and dataset reproduce the run bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .data_io import Dataset, NUM_CLASSES
from .decompositions import RankSpec, random_weight
from .trl import (
    TrlLayer,
    backward_batch,
    forward_batch,
    grad_list,
    param_list,
    replace_params,
)

EVAL_BATCH = 1024


@dataclass(frozen=True)
class TrainConfig:
    format: str
    rank: object
    max_steps: int
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    eval_every: int = 500
    seed: int = 0
    init_std: float = 0.1
    init_bias: float = 0.1
    early_stop_patience: int = 0
    lr_decay_steps: tuple = ()
    dropout: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.dropout != 0.0:
            raise ValueError(
                "dropout is reserved but not supported by this trainer; "
                "set it to 0"
            )
        if self.weight_decay != 0.0:
            raise ValueError(
                "weight decay is reserved but not supported by this "
                "trainer; set it to 0"
            )
        object.__setattr__(
            self, "lr_decay_steps", tuple(int(s) for s in self.lr_decay_steps)
        )

    def rank_spec(self) -> RankSpec:
        return RankSpec(self.format, self.rank)


@dataclass(frozen=True)
class EvalRecord:
    step: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass(frozen=True)
class TrainLog:
    records: tuple
    best_step: int
    best_val_accuracy: float
    seconds: float
    test_accuracy: float = None

    def to_csv_text(self) -> str:
        lines = ["step,train_loss,val_loss,val_acc"]
        for r in self.records:
            lines.append(
                f"{r.step},{r.train_loss:.6f},{r.val_loss:.6f},"
                f"{r.val_accuracy:.6f}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "records": [
                {
                    "step": r.step,
                    "train_loss": r.train_loss,
                    "val_loss": r.val_loss,
                    "val_accuracy": r.val_accuracy,
                }
                for r in self.records
            ],
            "best_step": self.best_step,
            "best_val_accuracy": self.best_val_accuracy,
            "seconds": self.seconds,
            "test_accuracy": self.test_accuracy,
        }


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-softmax of the true class, with the gradient
    (softmax - onehot) / batch.  Stabilized by row-max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    s, c = logits.shape
    if labels.shape != (s,):
        raise ValueError(f"{labels.shape} labels for {s} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(s), labels]))
    grad = np.exp(shifted) / np.exp(log_z)[:, None]
    grad[np.arange(s), labels] -= 1.0
    return loss, grad / s


def sgd_momentum_step(params, grads, velocity, lr: float, momentum: float):
    """One heavy-ball update over parallel lists of arrays; returns the new
    (params, velocity) without mutating the inputs."""
    params = tuple(params)
    grads = tuple(grads)
    velocity = tuple(velocity)
    if not len(params) == len(grads) == len(velocity):
        raise ValueError("params, grads, velocity must align")
    for p, g, v in zip(params, grads, velocity):
        if not p.shape == g.shape == v.shape:
            raise ValueError(
                f"shape mismatch: param {p.shape}, grad {g.shape}, "
                f"velocity {v.shape}"
            )
    new_v = tuple(momentum * v + g for v, g in zip(velocity, grads))
    new_p = tuple(p - lr * v for p, v in zip(params, new_v))
    return new_p, new_v


def init_layer(config: TrainConfig, input_dims, num_classes=NUM_CLASSES):
    """Seeded initial layer: every factor entry N(0, init_std^2), bias
    constant init_bias."""
    rng = np.random.default_rng(config.seed)
    dims = tuple(input_dims) + (num_classes,)
    weight = random_weight(config.rank_spec(), dims, rng, config.init_std)
    bias = np.full(num_classes, config.init_bias)
    return TrlLayer(weight, bias), rng


def evaluate(layer: TrlLayer, d: Dataset):
    """(mean loss, accuracy) over a dataset; argmax ties resolve to the
    lowest class index."""
    total = len(d)
    if total == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    loss_sum = 0.0
    hits = 0
    for start in range(0, total, EVAL_BATCH):
        stop = min(start + EVAL_BATCH, total)
        logits = forward_batch(layer, d.inputs[start:stop])
        labels = d.labels[start:stop]
        loss, _ = softmax_cross_entropy(logits, labels)
        loss_sum += loss * (stop - start)
        hits += int(np.sum(np.argmax(logits, axis=1) == labels))
    return loss_sum / total, hits / total


def _lr_at(config: TrainConfig, step: int) -> float:
    drops = sum(1 for s in config.lr_decay_steps if step >= s)
    return config.learning_rate * (0.1 ** drops)


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset):
    """Run SGD with momentum and return (best layer, log).

    The best checkpoint is the evaluation with the highest validation
    accuracy, earliest step winning ties.  An evaluation always runs at
    the final step; with ``early_stop_patience`` > 0 training stops after
    that many evaluations without improvement.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    input_dims = train_set.inputs.shape[1:]
    layer, rng = init_layer(config, input_dims)
    started = time.perf_counter()
    if config.max_steps == 0:
        log = TrainLog(
            records=(), best_step=0, best_val_accuracy=0.0,
            seconds=time.perf_counter() - started,
        )
        return layer, log

    params = param_list(layer)
    velocity = tuple(np.zeros_like(p) for p in params)
    order = rng.permutation(len(train_set))
    cursor = 0
    records = []
    best = None          # (accuracy, step, params)
    stale = 0
    for step in range(1, config.max_steps + 1):
        if cursor >= len(order):
            order = rng.permutation(len(train_set))
            cursor = 0
        idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size
        xs = train_set.inputs[idx]
        ys = train_set.labels[idx]
        layer = replace_params(layer, params)
        logits = forward_batch(layer, xs)
        _, upstream = softmax_cross_entropy(logits, ys)
        grads = grad_list(backward_batch(layer, xs, upstream))
        params, velocity = sgd_momentum_step(
            params, grads, velocity, _lr_at(config, step), config.momentum
        )
        if step % config.eval_every == 0 or step == config.max_steps:
            layer = replace_params(layer, params)
            train_loss, _ = evaluate(layer, train_set)
            val_loss, val_acc = evaluate(layer, val_set)
            records.append(EvalRecord(step, train_loss, val_loss, val_acc))
            if best is None or val_acc > best[0]:
                best = (val_acc, step, tuple(p.copy() for p in params))
                stale = 0
            else:
                stale += 1
                if config.early_stop_patience and stale >= config.early_stop_patience:
                    break
    layer = replace_params(layer, best[2])
    log = TrainLog(
        records=tuple(records),
        best_step=best[1],
        best_val_accuracy=best[0],
        seconds=time.perf_counter() - started,
    )
    return layer, log


def with_test_accuracy(log: TrainLog, accuracy: float) -> TrainLog:
    return replace(log, test_accuracy=float(accuracy))
