"""Small numeric kernel: softmax, similarities, divergences, seeded sampling.

All arrays are float64. Functions that take probability vectors operate on the
last axis, so a ``(n, K)`` batch works wherever a single ``(K,)`` vector does.

Random streams come from numpy's PCG64 bit generator (O'Neill's permuted
congruential generator, 128-bit state, XSL-RR output), seeded through
``numpy.random.SeedSequence``. Independent sub-streams are obtained with
``SeedSequence.spawn`` so that adding a consumer never shifts another one.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, NumericFailureError

EPS = 1e-12

Rng = np.random.Generator


def make_rng(seed: int | np.random.SeedSequence) -> Rng:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int | np.random.SeedSequence, n: int) -> list[Rng]:
    """``n`` independent generators derived from one seed, stable in ``n``'s prefix."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return [make_rng(child) for child in seed.spawn(n)]


def _as_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    return arr


def softmax(logits) -> np.ndarray:
    z = _as_array(logits, "logits")
    if z.shape[-1] < 2:
        raise InvalidArgumentError("softmax needs at least 2 classes")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("logits contain NaN or Inf")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cosine_similarity(a, b) -> float:
    a = _as_array(a, "a")
    b = _as_array(b, "b")
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    sa, sb = np.max(np.abs(a)), np.max(np.abs(b))
    if sa == 0.0 or sb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    # rescale first so squares neither underflow nor overflow
    a, b = a / sa, b / sb
    return float(np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1.0, 1.0))


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Unit-normalise rows; all-zero rows stay zero (similarity 0 to everything)."""
    x = np.asarray(x, dtype=np.float64)
    scale = np.max(np.abs(x), axis=-1, keepdims=True)
    x = np.divide(x, scale, out=np.zeros_like(x), where=scale > 0)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def kl_divergence(p, q):
    """KL(p || q) over the last axis; ``q`` is clamped at ``EPS`` before the log."""
    p = _as_array(p, "p")
    q = _as_array(q, "q")
    if p.shape != q.shape:
        raise InvalidArgumentError(f"shape mismatch {p.shape} vs {q.shape}")
    logratio = np.log(np.where(p > 0, p, 1.0)) - np.log(np.maximum(q, EPS))
    out = np.sum(np.where(p > 0, p * logratio, 0.0), axis=-1)
    return float(out) if out.ndim == 0 else out


def squared_error(a, b):
    a = _as_array(a, "a")
    b = _as_array(b, "b")
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    out = np.sum((a - b) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def entropy(p):
    p = _as_array(p, "p")
    out = -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=-1)
    return float(out) if out.ndim == 0 else out


def beta_sample(rng: Rng, beta: float, size=None):
    """Symmetric Beta(beta, beta) draw as the ratio X / (X + Y) of two Gamma(beta, 1)."""
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    x = rng.gamma(beta, 1.0, size)
    y = rng.gamma(beta, 1.0, size)
    total = x + y
    # Both gammas underflowing to 0 is possible for tiny beta; fall back to a fair split.
    out = np.divide(x, total, out=np.full_like(np.asarray(total, dtype=np.float64), 0.5),
                    where=np.asarray(total) > 0)
    return float(out) if np.ndim(out) == 0 else out


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if not h > 0:
        raise InvalidArgumentError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericFailureError(f"non-finite objective near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
