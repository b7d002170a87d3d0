"""Losses, AdamW, early-stopped training and evaluation."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .autograd import Tensor, backward, concat, log_softmax
from .datasets import Dataset
from .metrics import accuracy, auroc, r2_score
from .model import ConfigError, GATSM

logger = logging.getLogger(__name__)

LOSSES = ("auto", "mse", "bce", "ce")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    patience: int = 20
    max_epochs: int = 200
    seed: int = 0
    loss: str = "auto"

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class AdamW:
    """Adam with decoupled weight decay: ``p <- p - lr*wd*p`` before the Adam step."""

    def __init__(self, params, lr: float = 1e-3, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        b1, b2, t = self.beta1, self.beta2, self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** t)
            v_hat = self.v[i] / (1 - b2 ** t)
            new = p.data * (1 - self.lr * self.weight_decay)
            new = new - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            new.flags.writeable = False
            p.data = new


def resolve_loss(task: str, loss: str = "auto") -> str:
    if loss != "auto":
        return loss
    return {"regression": "mse", "binary": "bce", "multiclass": "ce"}[task]


def target_scores(scores, lengths, per_step: bool):
    """Pick the scored positions: every valid step, or the last valid step per series.

    Returns ``(selected, weights)``; ``selected`` is ``(N, T, C)`` with a
    validity weight ``(N, T)`` for per-step targets, else ``(N, C)`` with
    ``weights=None``.
    """
    lengths = np.asarray(lengths)
    N, T = scores.shape[0], scores.shape[1]
    if per_step:
        return scores, (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)
    return scores[np.arange(N), lengths - 1], None


def loss_value(scores: Tensor, y: np.ndarray, lengths, per_step: bool, kind: str) -> Tensor:
    """Mean loss over scored positions; padded steps add nothing."""
    sel, w = target_scores(scores, lengths, per_step)
    if w is None:
        w = np.ones(sel.shape[:-1])
    if kind == "mse":
        diff = sel.reshape(*sel.shape[:-1]) - y
        per = diff * diff
    else:
        logits = sel
        if sel.shape[-1] == 1:
            logits = concat([Tensor(np.zeros(sel.shape)), sel], axis=-1)
        n_cls = logits.shape[-1]
        onehot = np.zeros(logits.shape)
        labels = np.asarray(y, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= n_cls:
            raise ValueError(f"labels out of range for {n_cls} classes")
        np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
        per = -(log_softmax(logits, axis=-1) * onehot).sum(axis=-1)
    return (per * w).sum() * (1.0 / w.sum())


@dataclass
class TrainResult:
    model: GATSM
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    epochs_run: int = 0


def _batches(n: int, size: int, order):
    for start in range(0, n, size):
        yield order[start:start + size]


def _trim(X, y, lengths, per_step):
    T = int(lengths.max())
    return X[:, :T], (y[:, :T] if per_step else y), lengths


def dataset_loss(model: GATSM, data: Dataset, kind: str, batch_size: int = 256) -> float:
    X, lengths, y = data.arrays()
    total, count = 0.0, 0.0
    for idx in _batches(len(data), batch_size, np.arange(len(data))):
        Xb, yb, lb = _trim(X[idx], y[idx], lengths[idx], data.per_step)
        scores = Tensor(model.predict(Xb, lb))
        n = float(lb.sum()) if data.per_step else float(len(idx))
        total += loss_value(scores, yb, lb, data.per_step, kind).item() * n
        count += n
    return total / count


def train(model: GATSM, train_data: Dataset, val_data: Dataset,
          config: TrainConfig | None = None, log_path=None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Minimize the task loss with AdamW; stop after ``patience`` epochs without a
    strictly lower validation loss and restore the best-validation parameters."""
    config = config or TrainConfig()
    for d in (train_data, val_data):
        if not d.preprocessed:
            raise ValueError("train/validation data must be preprocessed first")
    kind = resolve_loss(model.task, config.loss)
    rng = np.random.default_rng(config.seed)
    opt = AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    X, lengths, y = train_data.arrays()
    result = TrainResult(model)
    best_state = model.state_dict()
    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(train_data))
            total, count = 0.0, 0.0
            for idx in _batches(len(order), config.batch_size, order):
                Xb, yb, lb = _trim(X[idx], y[idx], lengths[idx], train_data.per_step)
                opt.zero_grad()
                scores = model.forward(Xb, lb, training=True, rng=rng)
                loss = loss_value(scores, yb, lb, train_data.per_step, kind)
                value = loss.item()
                if not np.isfinite(value):
                    raise DivergenceError(epoch, value)
                backward(loss)
                opt.step()
                n = float(lb.sum()) if train_data.per_step else float(len(idx))
                total += value * n
                count += n
            val_loss = dataset_loss(model, val_data, kind)
            if not np.isfinite(val_loss):
                raise DivergenceError(epoch, val_loss)
            record = {"epoch": epoch, "train_loss": total / count, "val_loss": val_loss}
            result.log.append(record)
            result.epochs_run = epoch
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
            if on_epoch is not None:
                on_epoch(record)
            logger.debug("epoch %d train %.6g val %.6g", epoch, record["train_loss"], val_loss)
            if val_loss < result.best_val_loss:
                result.best_val_loss = val_loss
                result.best_epoch = epoch
                best_state = model.state_dict()
            elif epoch - result.best_epoch >= config.patience:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
    model.load_state_dict(best_state)
    return result


@dataclass
class Metrics:
    loss: float
    r2: float | None = None
    auroc: float | None = None
    accuracy: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def collect_scores(model: GATSM, data: Dataset, batch_size: int = 256):
    """Scores and targets at every scored position, flattened in sample order."""
    X, lengths, y = data.arrays()
    scores, targets = [], []
    for idx in _batches(len(data), batch_size, np.arange(len(data))):
        Xb, yb, lb = _trim(X[idx], y[idx], lengths[idx], data.per_step)
        s = model.predict(Xb, lb)
        if data.per_step:
            valid = np.arange(Xb.shape[1])[None, :] < lb[:, None]
            scores.append(s[valid])
            targets.append(yb[valid])
        else:
            scores.append(s[np.arange(len(idx)), lb - 1])
            targets.append(yb)
    return np.concatenate(scores), np.concatenate(targets)


def evaluate(model: GATSM, data: Dataset, loss: str = "auto") -> Metrics:
    """Task metrics on a preprocessed split; R² is computed on the original target scale."""
    if not data.preprocessed:
        raise ValueError("evaluation data must be preprocessed first")
    kind = resolve_loss(model.task, loss)
    metrics = Metrics(loss=dataset_loss(model, data, kind))
    scores, targets = collect_scores(model, data)
    if model.task == "regression":
        pred, true = scores[:, 0], targets
        if model.preprocessor is not None:
            pred = model.preprocessor.unscale_target(pred)
            true = model.preprocessor.unscale_target(true)
        metrics.r2 = r2_score(true, pred)
    elif model.task == "binary":
        metrics.auroc = auroc(targets, scores[:, 0])
        metrics.accuracy = accuracy(targets, (scores[:, 0] > 0).astype(np.int64))
    else:
        metrics.accuracy = accuracy(targets, scores.argmax(axis=-1))
    return metrics
