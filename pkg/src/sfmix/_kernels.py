"""Hot kernels: exhaustive cosine top-k search and neighbour gathering.

Two implementations of each kernel live here. The numba ones are used when
numba imports cleanly and ``SFMIX_DISABLE_NUMBA`` is unset (or "0"); the
pure-numpy ones otherwise. Both rank by descending similarity and break ties
by the smaller bank index, so they agree on every input without near-ties.
"""

from __future__ import annotations

import os

import numpy as np

from .numkit import normalize_rows

_DISABLED = os.environ.get("SFMIX_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

try:
    if _DISABLED:
        raise ImportError("numba disabled by SFMIX_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def _topk_numpy(qn, bn, m, exclude):
    sims = qn @ bn.T
    rows = np.nonzero(exclude >= 0)[0]
    sims[rows, exclude[rows]] = -np.inf
    # stable sort on -sim keeps the smaller index first among equal similarities
    order = np.argsort(-sims, axis=1, kind="stable")[:, :m]
    return order, np.take_along_axis(sims, order, axis=1)


def _gather_mean_numpy(values, idx):
    return values[idx].mean(axis=1)


if HAVE_NUMBA:

    @njit(cache=True)
    def _topk_numba(qn, bn, m, exclude):
        nq, d = qn.shape
        nb = bn.shape[0]
        out_idx = np.empty((nq, m), dtype=np.int64)
        out_sim = np.empty((nq, m), dtype=np.float64)
        for r in range(nq):
            filled = 0
            for j in range(nb):
                if j == exclude[r]:
                    continue
                s = 0.0
                for c in range(d):
                    s += qn[r, c] * bn[j, c]
                if filled == m and s <= out_sim[r, m - 1]:
                    continue
                pos = filled if filled < m else m - 1
                # shift strictly smaller entries down; equal ones keep priority
                while pos > 0 and out_sim[r, pos - 1] < s:
                    if pos < m:
                        out_sim[r, pos] = out_sim[r, pos - 1]
                        out_idx[r, pos] = out_idx[r, pos - 1]
                    pos -= 1
                out_sim[r, pos] = s
                out_idx[r, pos] = j
                if filled < m:
                    filled += 1
        return out_idx, out_sim

    @njit(cache=True)
    def _gather_mean_numba(values, idx):
        n, m = idx.shape
        k = values.shape[1]
        out = np.zeros((n, k), dtype=np.float64)
        for r in range(n):
            for t in range(m):
                j = idx[r, t]
                for c in range(k):
                    out[r, c] += values[j, c]
            for c in range(k):
                out[r, c] /= m
        return out


def cosine_topk(queries, bank, m: int, exclude=None, backend: str | None = None):
    """Indices and cosine similarities of the ``m`` bank rows closest to each query.

    ``exclude[r]`` (or -1) names one bank row that query ``r`` may not return.
    """
    qn = normalize_rows(np.atleast_2d(queries))
    bn = normalize_rows(np.atleast_2d(bank))
    if exclude is None:
        exclude = np.full(qn.shape[0], -1, dtype=np.int64)
    exclude = np.ascontiguousarray(exclude, dtype=np.int64)
    backend = backend or ("numba" if HAVE_NUMBA else "numpy")
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return _topk_numba(np.ascontiguousarray(qn), np.ascontiguousarray(bn), int(m), exclude)
    return _topk_numpy(qn, bn, int(m), exclude)


def gather_mean(values, idx, backend: str | None = None) -> np.ndarray:
    """Row-wise mean of ``values[idx[r]]``."""
    backend = backend or ("numba" if HAVE_NUMBA else "numpy")
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return _gather_mean_numba(np.ascontiguousarray(values, dtype=np.float64), idx)
    return _gather_mean_numpy(np.asarray(values, dtype=np.float64), idx)


def active_backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
