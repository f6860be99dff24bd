"""Target memory banks and the frequency-weighted aggregation label refinery.

Stored predictions are already re-weighted: at write time each batch of
softmax outputs is squared, divided by the batch's soft class frequencies and
renormalised. At read time a sample's soft label is the plain mean of the
stored predictions of its ``m`` cosine-nearest bank neighbours (itself excluded).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._kernels import cosine_topk, gather_mean
from .errors import InvalidArgumentError, StateError
from .model import Network, forward
from .numkit import EPS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoConfig:
    m: int = 5
    aggregate: bool = True  # False: use the sample's own stored prediction

    def __post_init__(self):
        if self.m < 1:
            raise InvalidArgumentError("m must be >= 1")


def frequency_weight(p_batch) -> np.ndarray:
    """Sharpen (square) each row, divide by batch soft frequencies, renormalise."""
    p = np.atleast_2d(np.asarray(p_batch, dtype=np.float64))
    if p.shape[0] == 0:
        raise InvalidArgumentError("empty batch")
    freq = p.sum(axis=0)
    if np.any(freq <= 0):
        log.debug("zero soft frequency in batch; clamping to %g", EPS)
        freq = np.maximum(freq, EPS)
    w = p * p / freq
    return w / w.sum(axis=1, keepdims=True)


class MemoryBank:
    def __init__(self, n: int, feature_dim: int, n_classes: int):
        self.features = np.zeros((n, feature_dim))
        self.preds = np.zeros((n, n_classes))
        self.initialized = np.zeros(n, dtype=bool)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def ready(self) -> bool:
        return bool(self.initialized.all())

    def copy(self) -> "MemoryBank":
        out = MemoryBank.__new__(MemoryBank)
        out.features = self.features.copy()
        out.preds = self.preds.copy()
        out.initialized = self.initialized.copy()
        return out

    def dump_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("index,argmax,max_prob\n")
            for i, row in enumerate(self.preds):
                fh.write(f"{i},{int(row.argmax())},{float(row.max())!r}\n")


def update_bank(bank: MemoryBank, indices, features, probs_batch) -> MemoryBank:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(bank)):
        raise InvalidArgumentError("bank index out of range")
    bank.features[idx] = features
    bank.preds[idx] = frequency_weight(probs_batch)
    bank.initialized[idx] = True
    return bank


def init_banks(target, net: Network, batch_size: int = 64) -> MemoryBank:
    """One index-order pass of the source model over the (unlabeled) target set."""
    n = len(target)
    bank = MemoryBank(n, net.feature_dim, net.n_classes)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        fwd = forward(net, target.x[idx])
        update_bank(bank, idx, fwd.feature, fwd.probs)
    return bank


def neighbors(indices, bank: MemoryBank, m: int) -> np.ndarray:
    """The ``m`` cosine-nearest bank rows to ``B_f[i]`` for each ``i``, excluding ``i``."""
    idx = np.asarray(indices, dtype=np.int64)
    if m >= len(bank):
        raise InvalidArgumentError(f"m={m} must be smaller than the bank size {len(bank)}")
    nbr, _ = cosine_topk(bank.features[idx], bank.features, m, exclude=idx)
    return nbr


def aggregate(indices, bank: MemoryBank, cfg: PseudoConfig) -> np.ndarray:
    """Soft pseudo labels for target rows ``indices`` (scalar index -> one row)."""
    if not bank.ready:
        raise StateError("memory bank is not fully initialized")
    scalar = np.ndim(indices) == 0
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if cfg.aggregate:
        out = gather_mean(bank.preds, neighbors(idx, bank, cfg.m))
    else:
        out = bank.preds[idx].copy()
    return out[0] if scalar else out
