"""Mini-batch Adam training with best-validation checkpoint selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..melspec import MelSpectrogram
from .fusion import FusionInput
from .loss import freq_weighted_l1, loss_weights
from .model import ModelParams, forward, loss_and_grad

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at step {step}; training aborted")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int | None = None


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None = None


@dataclass
class TrainResult:
    model: ModelParams
    epochs: list[EpochStats] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    best_epoch: int | None = None


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place update of ``params``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


Sample = tuple[FusionInput, MelSpectrogram]


def _stack(samples: Sequence[Sample], dtype):
    x = np.stack([s[0].x for s in samples]).astype(dtype)
    r = np.stack([s[0].r for s in samples]).astype(dtype)
    y = np.stack([s[1].values for s in samples]).astype(dtype)
    return FusionInput(x, r), y


def evaluate(model: ModelParams, samples: Sequence[Sample], batch_size: int = 32) -> float:
    """Mean per-sample frequency-weighted L1 over ``samples``."""
    weights = loss_weights(model.dims.n_mels)
    total = 0.0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        inp, y = _stack(chunk, model.dtype)
        pred, _ = forward(model, inp)
        total += freq_weighted_l1(pred, y, weights) * len(chunk)
    return total / len(samples)


def _check_dataset(model: ModelParams, samples: Sequence[Sample], name: str) -> None:
    dims = model.dims
    for k, (_, target) in enumerate(samples):
        if target.shape != (dims.frames, dims.n_mels):
            raise ValueError(
                f"{name}[{k}]: target shape {target.shape}, model expects {(dims.frames, dims.n_mels)}"
            )


def train(model: ModelParams, dataset: Sequence[Sample], config: TrainConfig = TrainConfig(),
          validation: Sequence[Sample] | None = None) -> TrainResult:
    """Train a copy of ``model``; the input model is left untouched.

    Deterministic for a given ``config.seed``. With a validation set, the
    parameters from the epoch with the lowest validation loss are returned.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if config.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    _check_dataset(model, dataset, "dataset")
    if validation:
        _check_dataset(model, validation, "validation")

    model = model.copy()
    params = model.tensors()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    weights = loss_weights(model.dims.n_mels)
    rng = np.random.default_rng(config.seed)
    result = TrainResult(model)
    best_val = np.inf
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        seen, running = 0, 0.0
        for start in range(0, len(order), config.batch_size):
            if config.max_steps is not None and step >= config.max_steps:
                break
            batch = [dataset[k] for k in order[start:start + config.batch_size]]
            inp, y = _stack(batch, model.dtype)
            loss, grads = loss_and_grad(model, inp, y, weights)
            if not np.isfinite(loss):
                raise TrainingDiverged(step, loss)
            opt.step(params, grads.tensors())
            step += 1
            result.step_losses.append(loss)
            running += loss * len(batch)
            seen += len(batch)
        if seen == 0:
            break
        stats = EpochStats(epoch, running / seen)
        if validation:
            stats.val_loss = evaluate(model, validation, config.batch_size)
            if stats.val_loss < best_val:
                best_val = stats.val_loss
                result.model = model.copy()
                result.best_epoch = epoch
        result.epochs.append(stats)
        log.info("epoch %d train %.6f val %s", epoch, stats.train_loss, stats.val_loss)
    if not validation:
        result.model = model
        result.best_epoch = result.epochs[-1].epoch if result.epochs else None
    return result
