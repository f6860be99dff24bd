"""Finite-difference oracle for parameter gradients of the hand-derived losses."""

import numpy as np

from sfmix.model import forward, init_network
from sfmix.numkit import finite_diff_gradient, make_rng

FLOOR = 1e-6


def rel_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FLOOR)
    return np.abs(analytic - numeric) / denom


def max_rel_error(net, loss_value, analytic, h=1e-5):
    """Largest elementwise relative error over every tensor in ``analytic``.

    ``loss_value(net)`` must be a pure function of the parameters.
    """
    params = net.params()
    worst = 0.0
    for name, grad in analytic.items():
        p = params[name]
        orig = p.copy()

        def f(theta, p=p):
            p[...] = theta
            return loss_value(net)

        numeric = finite_diff_gradient(f, orig, h)
        p[...] = orig
        worst = max(worst, float(rel_error(grad, numeric).max()))
    return worst


def small_case(seed, n=8, input_dim=3, hidden=(6,), feature_dim=5, n_classes=4, margin=1e-3):
    """A <=1k-parameter net and batch whose ReLU pre-activations stay clear of the kink."""
    rng = make_rng(seed)
    while True:
        net = init_network(input_dim, n_classes, rng, hidden=hidden, feature_dim=feature_dim)
        x = rng.normal(size=(n, input_dim))
        fwd = forward(net, x, keep_cache=True)
        _, pre = fwd.cache
        if all(np.min(np.abs(z)) > margin for z, layer in zip(pre, net.layers)
               if layer.activation == "relu"):
            return net, x, rng
