"""Cross-entropy training with AdamW."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classifier import Classifier
from .textprep import TokenSeq, stack

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    epochs: int = 8
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-5
    weight_decay: float = 0.01
    seed: int = 42
    val_fraction: float = 0.0
    early_stopping_patience: int = 0  # 0 = off

    def validate(self) -> list[str]:
        errors = []
        if not self.learning_rate >= 0:
            errors.append(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                errors.append(f"{name} must be in (0, 1)")
        if self.epsilon <= 0:
            errors.append("epsilon must be positive")
        if self.weight_decay < 0:
            errors.append("weight_decay must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            errors.append("val_fraction must be in [0, 1)")
        return errors

    def to_dict(self) -> dict:
        return asdict(self)


def cross_entropy(logits, true_class):
    """Mean cross-entropy over a batch.

    Accepts a single logit vector with an int class, or (B, C) logits with a
    length-B class array.  Returns ``(loss, grad_logits)`` where the gradient
    is of the *mean* loss.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    y = np.atleast_1d(np.asarray(true_class))
    if y.shape[0] != z.shape[0] or np.any((y < 0) | (y >= z.shape[1])):
        raise ValueError(f"invalid class labels {y!r} for logits of shape {logits.shape}")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    n = z.shape[0]
    loss = float(-logp[np.arange(n), y].mean())
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, (grad[0] if single else grad)


def no_decay(name: str) -> bool:
    """Biases and layer-norm parameters are excluded from weight decay."""
    return name.endswith((".b", ".gamma", ".beta"))


@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-5,
    weight_decay: float = 0.01,
) -> None:
    """In-place AdamW update with bias correction and decoupled weight decay."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name} at step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        if m.shape != p.shape:
            raise ValueError(f"optimizer state for {name} has shape {m.shape}, param {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if weight_decay and not no_decay(name):
            p -= lr * weight_decay * p
        p -= lr * update


def make_batch(examples: Sequence["Example"]) -> dict:
    batch: dict = {"labels": np.array([e.label for e in examples])}
    if examples[0].pair is not None:
        batch["pair"] = stack([e.pair for e in examples])
    else:
        batch["headline"] = stack([e.headline for e in examples])
        batch["body"] = stack([e.body for e in examples])
    return batch


@dataclass(frozen=True)
class Example:
    """Encoded article: dual variant uses headline/body, single uses pair."""

    label: int
    headline: TokenSeq | None = None
    body: TokenSeq | None = None
    pair: TokenSeq | None = None
    record_id: str = ""


def batch_loss(model: Classifier, examples: Sequence[Example], training=False, rng=None):
    batch = make_batch(examples)
    logits, cache = model.logits(batch, training, rng)
    loss, g = cross_entropy(logits, batch["labels"])
    return loss, g, cache, logits


def evaluate_loss(model: Classifier, examples: Sequence[Example], batch_size: int = 32) -> float:
    total = 0.0
    for i in range(0, len(examples), batch_size):
        chunk = examples[i : i + batch_size]
        loss, *_ = batch_loss(model, chunk)
        total += loss * len(chunk)
    return total / len(examples)


def train_step(model: Classifier, examples, state: OptimizerState, config: TrainConfig, rng) -> float:
    loss, g, cache, _ = batch_loss(model, examples, training=True, rng=rng)
    grads = model.backward(cache, g)
    adamw_step(
        model.params, grads, state, config.learning_rate, config.beta1, config.beta2,
        config.epsilon, config.weight_decay,
    )
    return loss


@dataclass
class TrainResult:
    log: list[dict]
    state: OptimizerState
    best_epoch: int | None = None


EpochCallback = Callable[[dict, Classifier, OptimizerState], None]


def train(
    model: Classifier,
    train_set: Sequence[Example],
    config: TrainConfig,
    val_set: Sequence[Example] | None = None,
    callbacks: Sequence[EpochCallback] = (),
    state: OptimizerState | None = None,
) -> TrainResult:
    """Seeded per-epoch shuffle, mean-loss mini-batches, one AdamW step per batch.

    Each callback receives the epoch log entry
    ``{"epoch", "train_loss", "val_loss"}``, the model and optimizer state
    after the epoch.  ``train_loss`` is the example-weighted mean of the
    batch losses seen during the epoch.
    """
    if not train_set:
        raise ValueError("training set is empty")
    errors = config.validate()
    if errors:
        raise ValueError("invalid train config: " + "; ".join(errors))
    if state is None:
        state = OptimizerState.for_params(model.params)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    history: list[dict] = []
    best_val, best_epoch, stale = math.inf, None, 0
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            chunk = [train_set[i] for i in order[start : start + config.batch_size]]
            total += train_step(model, chunk, state, config, dropout_rng) * len(chunk)
        entry = {"epoch": epoch, "train_loss": total / n, "val_loss": None}
        if val_set:
            entry["val_loss"] = evaluate_loss(model, val_set)
        history.append(entry)
        log.info("epoch %d train_loss %.6f val_loss %s", epoch, entry["train_loss"], entry["val_loss"])
        improved = entry["val_loss"] is not None and entry["val_loss"] < best_val
        if improved:
            best_val, best_epoch, stale = entry["val_loss"], epoch, 0
        else:
            stale += 1
        entry_for_cb = dict(entry, best=improved)
        for cb in callbacks:
            cb(entry_for_cb, model, state)
        if config.early_stopping_patience and val_set and stale >= config.early_stopping_patience:
            log.info("early stopping after epoch %d", epoch)
            break
    return TrainResult(history, state, best_epoch)


def write_epoch_log(path: str | Path, history: Sequence[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in history:
            fh.write(json.dumps({k: entry[k] for k in ("epoch", "train_loss", "val_loss")}) + "\n")
