"""Synthetic domain-shift pairs, CSV I/O, jitter augmentation, batch iteration."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .numkit import Rng, spawn_rngs

FAMILIES = ("rotated-blobs", "two-moons", "label-skew-blobs")
LAYOUTS = ("hub-ring", "ring")


class Sample(NamedTuple):
    index: int
    x: np.ndarray
    label: int | None


@dataclass(frozen=True)
class UnlabeledView:
    """What adaptation is allowed to see: inputs and row indices, no labels."""

    x: np.ndarray
    n_classes: int
    provenance: str = ""

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class Dataset:
    role: str  # "source" | "target" | "target-test"
    x: np.ndarray
    labels: np.ndarray | None
    n_classes: int
    provenance: str = ""
    origin: np.ndarray | None = None  # row ids in the parent dataset, for splits

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[0] == 0:
            raise InvalidArgumentError("dataset needs a nonempty (n, d) input array")
        if self.labels is not None:
            if self.labels.shape != (self.x.shape[0],):
                raise InvalidArgumentError("labels must have one entry per row")
            if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
                raise InvalidArgumentError("label outside [0, K)")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def samples(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield Sample(i, self.x[i], None if self.labels is None else int(self.labels[i]))

    def unlabeled(self) -> UnlabeledView:
        return UnlabeledView(self.x, self.n_classes, self.provenance)

    def subset(self, idx, role: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        origin = idx if self.origin is None else self.origin[idx]
        return Dataset(role or self.role, self.x[idx], labels, self.n_classes, self.provenance, origin)


@dataclass(frozen=True)
class ShiftSpec:
    family: str = "rotated-blobs"
    n_classes: int = 4
    n_per_domain: int = 2000
    angle: float = 50.0  # degrees, applied to target inputs about the origin
    noise: float = 0.35
    proportions: tuple | None = None  # target class mix for label-skew-blobs
    seed: int = 0
    layout: str = "hub-ring"
    radius: float = 1.5

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown family {self.family!r}")
        if self.n_classes < 2:
            raise InvalidArgumentError("need K >= 2")
        if self.n_per_domain <= 0:
            raise InvalidArgumentError("samples per domain must be positive")
        if not 0.0 <= self.angle < 360.0:
            raise InvalidArgumentError("angle must lie in [0, 360)")
        if self.noise < 0:
            raise InvalidArgumentError("noise must be nonnegative")
        if self.layout not in LAYOUTS:
            raise InvalidArgumentError(f"unknown layout {self.layout!r}")
        if self.family == "two-moons" and self.n_classes != 2:
            raise InvalidArgumentError("two-moons has exactly 2 classes")
        if self.proportions is not None:
            p = np.asarray(self.proportions, dtype=np.float64)
            if p.shape != (self.n_classes,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise InvalidArgumentError("proportions must be K nonnegative values summing to 1")
        elif self.family == "label-skew-blobs":
            raise InvalidArgumentError("label-skew-blobs needs a proportions vector")

    def provenance(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def class_centers(n_classes: int, layout: str, radius: float) -> np.ndarray:
    """Blob centres. ``ring``: K points evenly on a circle. ``hub-ring``: class 0
    at the origin (the rotation pivot), the other K-1 evenly on the circle."""
    if layout == "ring":
        a = 2 * np.pi * np.arange(n_classes) / n_classes
        return radius * np.c_[np.cos(a), np.sin(a)]
    a = 2 * np.pi * np.arange(n_classes - 1) / (n_classes - 1)
    return np.vstack([np.zeros((1, 2)), radius * np.c_[np.cos(a), np.sin(a)]])


def rotate(x: np.ndarray, angle_deg: float) -> np.ndarray:
    t = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return x @ rot.T


def _draw_labels(rng: Rng, n: int, proportions) -> np.ndarray:
    return rng.choice(len(proportions), size=n, p=proportions)


def _draw_inputs(spec: ShiftSpec, labels: np.ndarray, rng: Rng) -> np.ndarray:
    n = labels.shape[0]
    if spec.family == "two-moons":
        t = rng.uniform(0.0, np.pi, n)
        upper = np.c_[np.cos(t), np.sin(t)]
        lower = np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)]
        base = np.where(labels[:, None] == 0, upper, lower) - np.array([0.5, 0.25])
        return base * spec.radius + spec.noise * rng.standard_normal((n, 2))
    centers = class_centers(spec.n_classes, spec.layout, spec.radius)
    return centers[labels] + spec.noise * rng.standard_normal((n, 2))


def draw_domain(spec: ShiftSpec, rng: Rng, proportions=None, angle: float = 0.0):
    """Labels and inputs for one domain; rotation is applied last so the
    unrotated draw is recoverable with ``angle=0`` on the same stream."""
    k = spec.n_classes
    p = np.full(k, 1.0 / k) if proportions is None else np.asarray(proportions, dtype=np.float64)
    labels = _draw_labels(rng, spec.n_per_domain, p)
    x = _draw_inputs(spec, labels, rng)
    return rotate(x, angle) if angle else x, labels


def generate_shift_pair(spec: ShiftSpec) -> tuple[Dataset, Dataset]:
    spec.validate()
    src_rng, tgt_rng = spawn_rngs(spec.seed, 2)
    xs, ys = draw_domain(spec, src_rng)
    target_p = spec.proportions if spec.family == "label-skew-blobs" else None
    xt, yt = draw_domain(spec, tgt_rng, target_p, spec.angle)
    prov = spec.provenance()
    return (Dataset("source", xs, ys, spec.n_classes, prov),
            Dataset("target", xt, yt, spec.n_classes, prov))


def split_target(target: Dataset, test_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Seeded permutation split into (adaptation set, held-out test set)."""
    if not 0.0 <= test_fraction < 1.0:
        raise InvalidArgumentError("test_fraction must lie in [0, 1)")
    perm = rng.permutation(len(target))
    n_test = int(round(test_fraction * len(target)))
    train_idx = np.sort(perm[n_test:])
    test_idx = np.sort(perm[:n_test])
    train = target.subset(train_idx, "target")
    test = target.subset(test_idx, "target-test") if n_test else None
    return train, test


def augment(x, sigma, rng: Rng) -> np.ndarray:
    """Gaussian jitter; ``sigma`` may be a scalar or a per-feature vector."""
    x = np.asarray(x, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise InvalidArgumentError("sigma must be nonnegative")
    noise = rng.standard_normal(x.shape)
    return x + sigma * noise


def batches(data, batch_size: int, rng: Rng | None = None, shuffle: bool = True) -> list[np.ndarray]:
    """One epoch of index batches over ``data`` (a dataset, view or row count)."""
    n = data if isinstance(data, (int, np.integer)) else len(data)
    if n <= 0:
        raise InvalidArgumentError("cannot batch an empty dataset")
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be >= 1")
    order = rng.permutation(n) if shuffle else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def load_csv(path, labeled: bool = True, n_classes: int | None = None, role: str = "target") -> Dataset:
    """Rows of comma-separated floats; with ``labeled`` the last column is an int label."""
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < (2 if labeled else 1):
                    raise FormatError(f"row {rowno}: too few columns")
            elif len(row) != width:
                raise FormatError(f"row {rowno}: expected {width} columns, got {len(row)}")
            cells = row[:-1] if labeled else row
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise FormatError(f"row {rowno}: non-numeric cell") from None
            if labeled:
                try:
                    lab = float(row[-1])
                except ValueError:
                    raise FormatError(f"row {rowno}: non-numeric label") from None
                if lab != int(lab) or lab < 0:
                    raise FormatError(f"row {rowno}: label must be a nonnegative integer")
                labels.append(int(lab))
    if not rows:
        raise FormatError("empty CSV file")
    x = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise FormatError("non-finite value in CSV")
    y = np.asarray(labels, dtype=np.int64) if labeled else None
    if n_classes is None:
        n_classes = max(2, int(y.max()) + 1) if labeled else 2
    if labeled:
        bad = np.nonzero(y >= n_classes)[0]
        if bad.size:
            raise FormatError(f"row {bad[0] + 1}: label {y[bad[0]]} out of range for K={n_classes}")
    return Dataset(role, x, y, n_classes, f"csv:{Path(path).name}")


def write_csv(dataset, path, with_labels: bool = True) -> None:
    labels = getattr(dataset, "labels", None) if with_labels else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.x[i]]
            if labels is not None:
                row.append(str(int(labels[i])))
            w.writerow(row)
