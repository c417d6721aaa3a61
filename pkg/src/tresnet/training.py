"""Adam mini-batch training with validation early stopping."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError, UsageError
from .model import TResNetModel, mse_loss

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ShapeError(f"gradient {name} does not match any parameter shape")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.patience < 1:
            raise UsageError("patience must be >= 1")
        if self.max_epochs < 1:
            raise UsageError("max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise UsageError("learning_rate must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    improved: bool
    clipped_batches: int = 0
    elapsed: float = field(default=0.0, compare=False)


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1  # index into ``epochs``

    def __len__(self):
        return len(self.epochs)

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch]

    def write_csv(self, sink) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "improved", "clipped_batches"])
        for e in self.epochs:
            writer.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss), int(e.improved),
                             e.clipped_batches])


def evaluate_loss(model: TResNetModel, samples, batch_size: int = 512) -> float:
    """Inference-mode MSE, summed in fixed batch order then divided."""
    total = 0.0
    for start in range(0, len(samples), batch_size):
        idx = np.arange(start, min(start + batch_size, len(samples)))
        frags, y = samples.batch(idx)
        diff = model.forward(*frags, training=False) - y
        total += float(diff @ diff)
    return total / len(samples)


def _clip(grads: dict, max_norm: float) -> bool:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm <= max_norm:
        return False
    factor = max_norm / (norm + 1e-12)
    for g in grads.values():
        g *= factor
    return True


def train(model: TResNetModel, train_set, val_set, config: TrainConfig, on_improve=None):
    """Fit ``model`` and restore its best-validation snapshot.

    ``on_improve(model, record)`` is called after every improving epoch,
    e.g. to write a checkpoint. Returns ``(model, history)``. Non-finite
    losses raise :class:`DivergenceError` instead of numpy warnings.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _fit(model, train_set, val_set, config, on_improve)


def _fit(model, train_set, val_set, config, on_improve):
    if len(train_set) == 0 or len(val_set) == 0:
        raise UsageError("training and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    state = AdamState(config.learning_rate, config.beta1, config.beta2, config.eps)
    params = model.parameters()
    history = TrainHistory()
    best_loss = math.inf
    best_state = None
    stale = 0
    t0 = time.perf_counter()
    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        clipped = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            frags, y = train_set.batch(idx)
            pred = model.forward(*frags, training=True)
            loss, dpred = mse_loss(pred, y)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}",
                                      epoch=epoch, batch=b, history=history)
            grads = model.backward(dpred)
            if config.clip_norm is not None and _clip(grads, config.clip_norm):
                clipped += 1
            adam_step(params, grads, state)
            loss_sum += loss * idx.size
        val_loss = evaluate_loss(model, val_set)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}",
                                  epoch=epoch, history=history)
        improved = val_loss < best_loss
        record = EpochRecord(epoch, loss_sum / n, val_loss, improved, clipped,
                             time.perf_counter() - t0)
        history.epochs.append(record)
        log.info("epoch %d train=%.6g val=%.6g%s", epoch, record.train_loss, val_loss,
                 " *" if improved else "")
        if improved:
            best_loss = val_loss
            best_state = model.state_dict()
            history.best_epoch = len(history.epochs) - 1
            stale = 0
            if on_improve is not None:
                on_improve(model, record)
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state_dict(best_state)
    return model, history
