"""Supervised source training with label-smoothed cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, batches
from .errors import InvalidArgumentError
from .model import FreezeMask, Network, backward, forward, sgd_step
from .numkit import EPS, Rng


@dataclass(frozen=True)
class SmoothingConfig:
    n_classes: int
    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in [0, 1)")
        if self.n_classes < 2:
            raise InvalidArgumentError("need K >= 2")


def smooth_labels(y, cfg: SmoothingConfig) -> np.ndarray:
    """``(1 - alpha) * onehot(y) + alpha / K``; ``y`` may be an int or an int array."""
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= cfg.n_classes):
        raise InvalidArgumentError(f"class index out of range [0, {cfg.n_classes})")
    out = np.full((*y.shape, cfg.n_classes), cfg.alpha / cfg.n_classes)
    np.put_along_axis(out, y[..., None], 1.0 - cfg.alpha + cfg.alpha / cfg.n_classes, axis=-1)
    return out


def ls_cross_entropy(probs, smoothed):
    """Per-row ``-sum_k smoothed_k log probs_k`` with the log clamped at EPS."""
    probs = np.asarray(probs, dtype=np.float64)
    smoothed = np.asarray(smoothed, dtype=np.float64)
    if probs.shape != smoothed.shape:
        raise InvalidArgumentError(f"shape mismatch {probs.shape} vs {smoothed.shape}")
    out = -np.sum(smoothed * np.log(np.maximum(probs, EPS)), axis=-1)
    return float(out) if out.ndim == 0 else out


def ce_loss_and_grad(net: Network, x, targets):
    """Mean label-smoothed CE over a batch, and its parameter gradients.

    Because ``targets`` rows sum to one, d/dlogits reduces to ``probs - targets``.
    """
    fwd = forward(net, x, keep_cache=True)
    loss = float(np.mean(ls_cross_entropy(fwd.probs, targets)))
    grads = backward(net, fwd, fwd.probs - targets)
    return loss, grads


def train_source(source: Dataset, net: Network, epochs: int, lr: float, batch_size: int,
                 cfg: SmoothingConfig, rng: Rng) -> tuple[Network, list[float]]:
    """SGD over shuffled batches; returns the (in-place) trained net and per-epoch mean losses."""
    if source.labels is None:
        raise InvalidArgumentError("source training needs a labeled dataset")
    if epochs < 0:
        raise InvalidArgumentError("epochs must be nonnegative")
    targets = smooth_labels(source.labels, cfg)
    trace = []
    for _ in range(epochs):
        total, count = 0.0, 0
        for idx in batches(source, batch_size, rng, shuffle=True):
            loss, grads = ce_loss_and_grad(net, source.x[idx], targets[idx])
            sgd_step(net, grads, lr, FreezeMask())
            total += loss * len(idx)
            count += len(idx)
        trace.append(total / count)
    return net, trace


def write_loss_trace(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(trace, start=1):
            fh.write(f"{epoch},{loss!r}\n")
