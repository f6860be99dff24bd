"""MLP feature extractor + prototype classifier with hand-written backprop.

The network is ``f = h(g(x))``: ``g`` is a stack of dense layers (ReLU on
hidden layers, identity on the last) producing a ``d``-dim feature, and ``h``
is a bias-free linear map whose ``K`` weight rows double as class prototypes.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError, InvalidArgumentError, StateError
from .numkit import Rng, softmax

CLASSIFIER = "classifier.weight"
CLASSIFIER_BIAS = "classifier.bias"


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"  # "relu" | "identity"


@dataclass
class Network:
    layers: list[Layer]
    classifier: np.ndarray  # (K, d); row k is the prototype of class k
    classifier_bias: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        prev = self.layers[0].weight.shape[1]
        for i, layer in enumerate(self.layers):
            if layer.weight.shape[1] != prev or layer.bias.shape != (layer.weight.shape[0],):
                raise InvalidArgumentError(f"layer {i} shapes do not chain")
            if layer.activation not in ("relu", "identity"):
                raise InvalidArgumentError(f"unknown activation {layer.activation!r}")
            prev = layer.weight.shape[0]
        if self.classifier.ndim != 2 or self.classifier.shape[1] != prev:
            raise InvalidArgumentError("classifier width does not match feature dim")
        if self.classifier.shape[0] < 2:
            raise InvalidArgumentError("need at least 2 classes")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.classifier.shape[1]

    @property
    def n_classes(self) -> int:
        return self.classifier.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        """Parameter tensors by name, in serialisation order (live references)."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.weight"] = layer.weight
            out[f"layer{i}.bias"] = layer.bias
        out[CLASSIFIER] = self.classifier
        if self.classifier_bias is not None:
            out[CLASSIFIER_BIAS] = self.classifier_bias
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def init_network(input_dim: int, n_classes: int, rng: Rng, hidden=(32,), feature_dim: int = 16,
                 classifier_bias: bool = False) -> Network:
    """Uniform(+-1/sqrt(fan_in)) init for every tensor, drawn in declaration order."""
    dims = [input_dim, *hidden, feature_dim]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, (fan_out, fan_in))
        b = rng.uniform(-bound, bound, fan_out)
        act = "relu" if i < len(dims) - 2 else "identity"
        layers.append(Layer(w, b, act))
    bound = 1.0 / np.sqrt(feature_dim)
    cls = rng.uniform(-bound, bound, (n_classes, feature_dim))
    cls_b = rng.uniform(-bound, bound, n_classes) if classifier_bias else None
    return Network(layers, cls, cls_b)


class Forward(NamedTuple):
    feature: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    cache: tuple | None = None


def extract(net: Network, x) -> np.ndarray:
    """Features ``g(x)`` only."""
    return forward(net, x).feature


def forward(net: Network, x, keep_cache: bool = False) -> Forward:
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != net.input_dim:
        raise InvalidArgumentError(f"expected input dim {net.input_dim}, got {a.shape[1]}")
    acts = [a]
    pre = []
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(a)
    feature = a
    logits = feature @ net.classifier.T
    if net.classifier_bias is not None:
        logits = logits + net.classifier_bias
    probs = softmax(logits)
    cache = (acts, pre) if keep_cache else None
    if single:
        return Forward(feature[0], logits[0], probs[0], cache)
    return Forward(feature, logits, probs, cache)


def backward(net: Network, fwd: Forward, dlogits) -> dict[str, np.ndarray]:
    """Gradients of ``mean_i loss_i`` given per-sample ``dloss_i / dlogits_i``."""
    if fwd.cache is None:
        raise StateError("forward pass was run without keep_cache=True")
    acts, pre = fwd.cache
    g = np.atleast_2d(np.asarray(dlogits, dtype=np.float64))
    n = g.shape[0]
    if g.shape != (acts[0].shape[0], net.n_classes):
        raise InvalidArgumentError("dlogits shape does not match the cached batch")
    grads = {}
    feature = acts[-1]
    grads[CLASSIFIER] = g.T @ feature / n
    if net.classifier_bias is not None:
        grads[CLASSIFIER_BIAS] = g.mean(axis=0)
    da = g @ net.classifier
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = da * (pre[i] > 0) if layer.activation == "relu" else da
        grads[f"layer{i}.weight"] = delta.T @ acts[i] / n
        grads[f"layer{i}.bias"] = delta.mean(axis=0)
        if i:
            da = delta @ layer.weight
    return {name: grads[name] for name in net.params()}


def add_grads(total: dict | None, grads: dict, scale: float = 1.0) -> dict:
    if total is None:
        return {k: scale * v for k, v in grads.items()}
    for k, v in grads.items():
        total[k] += scale * v
    return total


@dataclass(frozen=True)
class FreezeMask:
    frozen: frozenset = frozenset()

    @classmethod
    def classifier_frozen(cls) -> "FreezeMask":
        return cls(frozenset({CLASSIFIER, CLASSIFIER_BIAS}))

    def trainable(self, name: str) -> bool:
        return name not in self.frozen


def sgd_step(net: Network, grads: dict, lr: float, mask: FreezeMask = FreezeMask()) -> Network:
    """In-place plain SGD on trainable tensors; returns ``net``."""
    if lr < 0:
        raise InvalidArgumentError("learning rate must be nonnegative")
    params = net.params()
    for name, g in grads.items():
        if name not in params:
            raise InvalidArgumentError(f"unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise InvalidArgumentError(f"gradient shape mismatch for {name}")
        if lr and mask.trainable(name):
            params[name] -= lr * g
    return net


# -- checkpoint format -------------------------------------------------------
# magic(8) version(u32) input_dim feature_dim K n_layers (u32 each)
# per layer: out(u32) in(u32) activation(u8: 0 identity, 1 relu)
# has_classifier_bias(u8) meta_len(u32) meta(utf-8 canonical JSON)
# then every tensor of Network.params() as little-endian float64, in order.

MAGIC = b"SFMXCKPT"
VERSION = 1
_ACT_CODE = {"identity": 0, "relu": 1}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}


def checkpoint_bytes(net: Network) -> bytes:
    parts = [MAGIC, struct.pack("<5I", VERSION, net.input_dim, net.feature_dim, net.n_classes,
                                len(net.layers))]
    for layer in net.layers:
        out_dim, in_dim = layer.weight.shape
        parts.append(struct.pack("<2IB", out_dim, in_dim, _ACT_CODE[layer.activation]))
    meta = json.dumps(net.meta, sort_keys=True, separators=(",", ":")).encode()
    parts.append(struct.pack("<BI", net.classifier_bias is not None, len(meta)))
    parts.append(meta)
    for p in net.params().values():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(net: Network, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(net))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_from_bytes(buf: bytes) -> Network:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError("not a sfmix checkpoint")
    version, input_dim, feature_dim, n_classes, n_layers = r.unpack("<5I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    shapes = []
    for _ in range(n_layers):
        out_dim, in_dim, act = r.unpack("<2IB")
        if act not in _ACT_NAME:
            raise FormatError(f"bad activation code {act}")
        shapes.append((out_dim, in_dim, _ACT_NAME[act]))
    has_bias, meta_len = r.unpack("<BI")
    try:
        meta = json.loads(r.take(meta_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad metadata block: {exc}") from None

    def tensor(*shape):
        n = int(np.prod(shape))
        return np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    layers = []
    for out_dim, in_dim, act in shapes:
        w = tensor(out_dim, in_dim)
        b = tensor(out_dim)
        layers.append(Layer(w, b, act))
    cls = tensor(n_classes, feature_dim)
    cls_b = tensor(n_classes) if has_bias else None
    if r.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint payload")
    try:
        net = Network(layers, cls, cls_b, meta)
    except InvalidArgumentError as exc:
        raise FormatError(str(exc)) from None
    if net.input_dim != input_dim:
        raise FormatError("header input_dim disagrees with layer shapes")
    return net


def load_checkpoint(path) -> Network:
    return checkpoint_from_bytes(Path(path).read_bytes())
