"""Proxy source domain: target samples pseudo-labeled by classifier prototypes.

``build_proxy`` takes, for every class prototype ``w_k`` (a classifier weight
row), the ``N`` target features with the smallest cosine distance
``1 - cos(g(x), w_k)`` and labels them ``k``. Selection is per class and
independent, so one target index may appear under several classes.

The entropy-guided and random selectors are ablation baselines; both label by
the source model's argmax prediction.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from ._kernels import cosine_topk
from .errors import FormatError, InvalidArgumentError
from .numkit import Rng, entropy
from .source import SmoothingConfig, smooth_labels

log = logging.getLogger(__name__)

SELECTORS = ("prototype", "entropy", "random")


@dataclass(frozen=True)
class ProxyConfig:
    n_per_class: int = 10

    def __post_init__(self):
        if self.n_per_class < 1:
            raise InvalidArgumentError("N must be >= 1")


@dataclass(frozen=True)
class ProxyDomain:
    """Selected (target index, class, score) triples, sorted by (class, score, index)."""

    indices: np.ndarray
    classes: np.ndarray
    scores: np.ndarray
    selector: str = "prototype"

    def __len__(self) -> int:
        return self.indices.shape[0]

    def class_counts(self, n_classes: int) -> np.ndarray:
        return np.bincount(self.classes, minlength=n_classes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "target_index", "score"])
            for k, i, s in zip(self.classes, self.indices, self.scores):
                w.writerow([int(k), int(i), repr(float(s))])

    @classmethod
    def from_csv(cls, path, selector: str = "prototype") -> "ProxyDomain":
        ks, idx, sc = [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["class", "target_index", "score"]:
                raise FormatError("proxy CSV must start with class,target_index,score")
            for rowno, row in enumerate(reader, start=2):
                try:
                    ks.append(int(row[0]))
                    idx.append(int(row[1]))
                    sc.append(float(row[2]))
                except (ValueError, IndexError):
                    raise FormatError(f"row {rowno}: malformed proxy entry") from None
        return _sorted_domain(np.array(idx, dtype=np.int64), np.array(ks, dtype=np.int64),
                              np.array(sc, dtype=np.float64), selector)


def _sorted_domain(indices, classes, scores, selector) -> ProxyDomain:
    order = np.lexsort((indices, scores, classes))
    return ProxyDomain(indices[order], classes[order], scores[order], selector)


def build_proxy(features, prototypes, cfg: ProxyConfig) -> ProxyDomain:
    """Exactly ``N`` nearest-in-angle target samples per class prototype.

    ``features`` must come from the source model, before any adaptation step.
    Ties go to the smaller target index.
    """
    features = np.asarray(features, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    valid = np.nonzero(np.any(features != 0, axis=1))[0]
    if valid.size < features.shape[0]:
        log.warning("excluding %d zero-norm target features from proxy candidacy",
                    features.shape[0] - valid.size)
    n = cfg.n_per_class
    if n > valid.size:
        raise InvalidArgumentError(f"N={n} exceeds the {valid.size} usable target samples")
    local, sims = cosine_topk(prototypes, features[valid], n)
    k = prototypes.shape[0]
    classes = np.repeat(np.arange(k), n)
    return _sorted_domain(valid[local.reshape(-1)], classes, (1.0 - sims).reshape(-1), "prototype")


def proxy_loss_labels(proxy: ProxyDomain, cfg: SmoothingConfig) -> np.ndarray:
    return smooth_labels(proxy.classes, cfg)


def entropy_split_ratio(probs) -> tuple[float, int]:
    """Fraction (and count) of samples whose entropy is strictly below the mean entropy."""
    h = entropy(np.atleast_2d(probs))
    below = int(np.sum(h < h.mean()))
    return below / h.shape[0], below


def entropy_guided_select(probs) -> ProxyDomain:
    """Per predicted class with ``n_k`` members, the ``floor(n_k * xi)`` lowest-entropy ones."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n = probs.shape[0]
    h = entropy(probs)
    _, below = entropy_split_ratio(probs)
    preds = probs.argmax(axis=1)
    idx, cls = [], []
    for k in range(probs.shape[1]):
        members = np.nonzero(preds == k)[0]
        take = members.size * below // n  # exact floor(n_k * xi) for xi = below / n
        if take:
            order = np.lexsort((members, h[members]))
            idx.append(members[order[:take]])
            cls.append(np.full(take, k))
    if not idx:
        empty = np.zeros(0, dtype=np.int64)
        return ProxyDomain(empty, empty.copy(), np.zeros(0), "entropy")
    idx = np.concatenate(idx).astype(np.int64)
    return _sorted_domain(idx, np.concatenate(cls).astype(np.int64), h[idx], "entropy")


def random_select(predictions, n_per_class: int, n_classes: int, rng: Rng) -> ProxyDomain:
    """``N`` uniform picks per predicted class; short classes are topped up from the rest."""
    predictions = np.asarray(predictions, dtype=np.int64)
    if n_per_class < 1:
        raise InvalidArgumentError("N must be >= 1")
    if n_per_class * n_classes > predictions.size:
        raise InvalidArgumentError("N*K exceeds the number of target samples")
    chosen = []
    deficit = 0
    for k in range(n_classes):
        members = np.nonzero(predictions == k)[0]
        if members.size >= n_per_class:
            chosen.append(rng.choice(members, n_per_class, replace=False))
        else:
            chosen.append(members)
            deficit += n_per_class - members.size
    picked = np.concatenate(chosen).astype(np.int64)
    if deficit:
        pool = np.setdiff1d(np.arange(predictions.size), picked)
        picked = np.concatenate([picked, rng.choice(pool, deficit, replace=False)])
    return _sorted_domain(picked, predictions[picked], np.zeros(picked.size), "random")


def proxy_purity(selection: ProxyDomain, labels, n_classes: int) -> tuple[float, np.ndarray]:
    """Fraction of entries whose assigned class is the true one; per-class (nan if empty)."""
    labels = np.asarray(labels)
    if len(selection) == 0:
        return float("nan"), np.full(n_classes, np.nan)
    hit = labels[selection.indices] == selection.classes
    per_class = np.full(n_classes, np.nan)
    for k in range(n_classes):
        mask = selection.classes == k
        if mask.any():
            per_class[k] = hit[mask].mean()
    return float(hit.mean()), per_class
