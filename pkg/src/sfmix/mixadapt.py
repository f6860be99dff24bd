"""Adaptation with a frozen classifier: proxy CE + inter/intra-domain mixup.

Per iteration the objective is

    L = L_ps + r * lambda_max * L_inter + r * eta_max * L_intra

with ``r`` ramping linearly from 0 to 1 over the run. ``L_ps`` is label-smoothed
CE on a proxy batch, ``L_inter`` is KL(q_mix || softmax(f(x_mix))) on
proxy/target mixtures, ``L_intra`` is the squared distance between
softmax(f(x_mix)) and q_mix on mixtures of the target batch and its jittered
copy. Soft labels are constants (no gradient flows into them).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import UnlabeledView, augment, batches
from .errors import InvalidArgumentError
from .model import FreezeMask, Network, add_grads, backward, forward, sgd_step
from .numkit import Rng, beta_sample, kl_divergence, squared_error
from .proxy import ProxyDomain
from .pseudo import PseudoConfig, aggregate, init_banks, update_bank
from .source import SmoothingConfig, ce_loss_and_grad, smooth_labels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixupConfig:
    beta: float = 0.75

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgumentError("beta must be positive")


@dataclass(frozen=True)
class AdaptConfig:
    lambda_max: float = 1.0
    eta_max: float = 100.0
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    aug_scale: float = 0.1  # jitter sigma as a fraction of per-feature target std
    alpha: float = 0.1  # label smoothing on proxy labels
    use_ps: bool = True
    use_inter: bool = True
    use_intra: bool = True

    def __post_init__(self):
        if self.lambda_max < 0 or self.eta_max < 0:
            raise InvalidArgumentError("loss weights must be nonnegative")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0 or self.aug_scale < 0:
            raise InvalidArgumentError("invalid adaptation schedule")


def ramp(iteration: int, total: int) -> float:
    if total <= 0:
        raise InvalidArgumentError("total iterations must be positive")
    if not 0 <= iteration <= total:
        raise InvalidArgumentError("iteration outside [0, total]")
    return iteration / total


def _rho_column(rho, n):
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0) or np.any(rho > 1):
        raise InvalidArgumentError("rho must lie in [0, 1]")
    return np.broadcast_to(rho.reshape(-1, 1) if rho.ndim else rho, (n, 1))


def inter_mix(x_ps, q_ps, x_t, q_hat, rho):
    """Convex mix of proxy pairs with target pairs; ``rho`` is a scalar or one per row."""
    x_ps, x_t = np.atleast_2d(x_ps), np.atleast_2d(x_t)
    q_ps, q_hat = np.atleast_2d(q_ps), np.atleast_2d(q_hat)
    if x_ps.shape != x_t.shape or q_ps.shape != q_hat.shape or x_ps.shape[0] != q_ps.shape[0]:
        raise InvalidArgumentError("inter_mix shape mismatch")
    r = _rho_column(rho, x_ps.shape[0])
    return r * x_ps + (1 - r) * x_t, r * q_ps + (1 - r) * q_hat


def intra_mix(x_t, q_hat, sigma, rng: Rng, rho=None, beta: float = 0.75, perm=None):
    """Mix ``cat(x_t, augment(x_t))`` with a shuffled copy of itself.

    Jittered copies inherit their original's soft label. Without an explicit
    ``rho`` one Beta(beta, beta) coefficient is drawn per mixed pair.
    """
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    q_hat = np.atleast_2d(np.asarray(q_hat, dtype=np.float64))
    if x_t.shape[0] < 2:
        raise InvalidArgumentError("intra-domain mixup needs a batch of at least 2")
    if q_hat.shape[0] != x_t.shape[0]:
        raise InvalidArgumentError("one soft label per target sample required")
    x_a = np.concatenate([x_t, augment(x_t, sigma, rng)])
    q_a = np.concatenate([q_hat, q_hat])
    n = x_a.shape[0]
    if perm is None:
        perm = rng.permutation(n)
    if rho is None:
        rho = beta_sample(rng, beta, n)
    r = _rho_column(rho, n)
    return r * x_a + (1 - r) * x_a[perm], r * q_a + (1 - r) * q_a[perm]


def inter_loss(net: Network, x_mix, q_mix) -> float:
    return float(np.mean(kl_divergence(q_mix, forward(net, np.atleast_2d(x_mix)).probs)))


def inter_loss_grad(net: Network, x_mix, q_mix):
    fwd = forward(net, np.atleast_2d(x_mix), keep_cache=True)
    q = np.atleast_2d(q_mix)
    value = float(np.mean(kl_divergence(q, fwd.probs)))
    # d KL(q || softmax(z)) / dz = softmax(z) - q, since q sums to one
    return value, backward(net, fwd, fwd.probs - q)


def intra_loss(net: Network, x_mix, q_mix) -> float:
    return float(np.mean(squared_error(forward(net, np.atleast_2d(x_mix)).probs, q_mix)))


def intra_loss_grad(net: Network, x_mix, q_mix):
    fwd = forward(net, np.atleast_2d(x_mix), keep_cache=True)
    s = fwd.probs
    r = s - np.atleast_2d(q_mix)
    value = float(np.mean(np.sum(r * r, axis=1)))
    # chain through the softmax Jacobian diag(s) - s s^T
    dz = 2.0 * s * (r - np.sum(s * r, axis=1, keepdims=True))
    return value, backward(net, fwd, dz)


def _zero_grads(net: Network) -> dict:
    return {k: np.zeros_like(v) for k, v in net.params().items()}


def total_loss(net: Network, x_ps, y_ps, x_t, q_hat, ramp_value: float, cfg: AdaptConfig,
               mix: MixupConfig, rng: Rng, rng_intra: Rng | None = None, sigma=0.0):
    """Weighted objective on one (proxy batch, target batch) pair.

    ``y_ps`` are proxy class ids. Returns ``(value, terms, grads)`` where
    ``terms`` holds the unweighted per-term losses.
    """
    rng_intra = rng if rng_intra is None else rng_intra
    k = net.n_classes
    lam = ramp_value * cfg.lambda_max
    eta = ramp_value * cfg.eta_max
    terms = {"ps": 0.0, "inter": 0.0, "intra": 0.0}
    grads = None
    have_proxy = x_ps is not None and len(x_ps) > 0
    if cfg.use_ps and have_proxy:
        smoothed = smooth_labels(y_ps, SmoothingConfig(k, cfg.alpha))
        terms["ps"], g = ce_loss_and_grad(net, x_ps, smoothed)
        grads = add_grads(grads, g)
    if cfg.use_inter and have_proxy:
        onehot = np.eye(k)[y_ps]
        rho = beta_sample(rng, mix.beta, len(x_t))
        xm, qm = inter_mix(x_ps, onehot, x_t, q_hat, rho)
        terms["inter"], g = inter_loss_grad(net, xm, qm)
        grads = add_grads(grads, g, lam)
    if cfg.use_intra and len(x_t) >= 2:
        xm, qm = intra_mix(x_t, q_hat, sigma, rng_intra, beta=mix.beta)
        terms["intra"], g = intra_loss_grad(net, xm, qm)
        grads = add_grads(grads, g, eta)
    value = terms["ps"] + lam * terms["inter"] + eta * terms["intra"]
    return value, terms, grads if grads is not None else _zero_grads(net)


class _Cycler:
    """Endless seeded walk over ``n`` items, reshuffled after each full pass."""

    def __init__(self, n: int, rng: Rng):
        self.n, self.rng = n, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, count: int) -> np.ndarray:
        out = []
        while count:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            step = min(count, self.n - self.pos)
            out.append(self.order[self.pos:self.pos + step])
            self.pos += step
            count -= step
        return np.concatenate(out)


def adapt(target: UnlabeledView, proxy: ProxyDomain, net: Network, cfg: AdaptConfig,
          mix: MixupConfig, pseudo: PseudoConfig, rng: Rng,
          on_epoch: Callable[[Network], dict] | None = None):
    """Fine-tune the extractor of ``net`` in place; returns ``(net, per-epoch trace)``.

    ``on_epoch`` is the only route to labeled metrics: it sees the model, never
    the adaptation internals. The classifier stays frozen throughout.
    """
    if not isinstance(target, UnlabeledView):
        raise TypeError("adapt accepts only an UnlabeledView of the target set")
    mask = FreezeMask.classifier_frozen()
    batch_rng, proxy_rng, inter_rng, intra_rng = rng.spawn(4)
    bank = init_banks(target, net, cfg.batch_size)
    sigma = cfg.aug_scale * target.x.std(axis=0)
    has_proxy = len(proxy) > 0
    if not has_proxy and (cfg.use_ps or cfg.use_inter):
        log.warning("empty proxy domain: proxy CE and inter-domain terms are skipped")
    cycler = _Cycler(len(proxy), proxy_rng) if has_proxy else None
    n_batches = -(-len(target) // cfg.batch_size)
    total_iters = cfg.epochs * n_batches
    denom = max(total_iters - 1, 1)
    it = 0
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        sums = {"ps": 0.0, "inter": 0.0, "intra": 0.0}
        count = 0
        r = 0.0
        for idx in batches(target, cfg.batch_size, batch_rng, shuffle=True):
            q_hat = aggregate(idx, bank, pseudo)
            if has_proxy:
                pick = cycler.take(len(idx))
                x_ps = target.x[proxy.indices[pick]]
                y_ps = proxy.classes[pick]
            else:
                x_ps = y_ps = None
            r = ramp(min(it, denom), denom)
            _, terms, grads = total_loss(net, x_ps, y_ps, target.x[idx], q_hat, r, cfg, mix,
                                         inter_rng, intra_rng, sigma)
            sgd_step(net, grads, cfg.lr, mask)
            fresh = forward(net, target.x[idx])
            update_bank(bank, idx, fresh.feature, fresh.probs)
            for key in sums:
                sums[key] += terms[key]
            count += 1
            it += 1
        row = {"epoch": epoch, "L_ps": sums["ps"] / count, "L_inter": sums["inter"] / count,
               "L_intra": sums["intra"] / count, "ramp": r}
        if on_epoch is not None:
            row.update(on_epoch(net))
        trace.append(row)
    return net, trace
