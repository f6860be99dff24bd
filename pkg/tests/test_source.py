import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sfmix import data, model, source
from sfmix.errors import InvalidArgumentError
from sfmix.numkit import entropy, make_rng, softmax
from sfmix.source import SmoothingConfig, ls_cross_entropy, smooth_labels

from gradcheck import max_rel_error, small_case


def test_smooth_labels_examples():
    lab = smooth_labels(3, SmoothingConfig(10, 0.1))
    assert lab[3] == pytest.approx(0.91, abs=1e-12)
    np.testing.assert_allclose(np.delete(lab, 3), 0.01, atol=1e-12)
    np.testing.assert_array_equal(smooth_labels(2, SmoothingConfig(4, 0.0)), [0, 0, 1, 0])
    np.testing.assert_allclose(smooth_labels(0, SmoothingConfig(2, 0.5)), [0.75, 0.25], atol=1e-15)
    with pytest.raises(InvalidArgumentError):
        smooth_labels(4, SmoothingConfig(4))
    with pytest.raises(InvalidArgumentError):
        SmoothingConfig(4, 1.0)


@given(st.integers(2, 70), st.floats(0, 0.99), st.data())
def test_smooth_labels_on_simplex(k, alpha, d):
    y = d.draw(st.integers(0, k - 1))
    lab = smooth_labels(y, SmoothingConfig(k, alpha))
    assert np.all(lab >= 0) and abs(lab.sum() - 1) <= 1e-9


def test_ls_cross_entropy_examples():
    u = np.full(4, 0.25)
    assert ls_cross_entropy(u, u) == pytest.approx(math.log(4), abs=1e-12)
    onehot = smooth_labels(1, SmoothingConfig(3, 0.0))
    assert ls_cross_entropy(onehot, onehot) <= 1e-10
    with pytest.raises(InvalidArgumentError):
        ls_cross_entropy([0.5, 0.5], [1.0, 0.0, 0.0])


@given(st.integers(0, 10_000))
def test_cross_entropy_at_least_label_entropy(seed):
    rng = make_rng(seed)
    probs = softmax(rng.normal(size=5) * 3)
    lab = smooth_labels(int(rng.integers(5)), SmoothingConfig(5, float(rng.uniform(0, 0.9))))
    assert ls_cross_entropy(probs, lab) >= entropy(lab) - 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_ce_gradient_matches_finite_differences(seed):
    net, x, rng = small_case(seed)
    y = rng.integers(0, net.n_classes, x.shape[0])
    targets = smooth_labels(y, SmoothingConfig(net.n_classes))
    _, grads = source.ce_loss_and_grad(net, x, targets)

    def loss(n):
        return float(np.mean(ls_cross_entropy(model.forward(n, x).probs, targets)))

    assert max_rel_error(net, loss, grads) <= 1e-4


def _blobs(seed=0):
    spec = data.ShiftSpec(n_classes=2, layout="ring", radius=2.0, n_per_domain=400, angle=0.0, seed=seed)
    return data.generate_shift_pair(spec)[0]


def test_zero_lr_leaves_model_unchanged():
    src = _blobs()
    net = model.init_network(2, 2, make_rng(0))
    before = model.checkpoint_bytes(net)
    _, trace = source.train_source(src, net, 2, 0.0, 32, SmoothingConfig(2), make_rng(1))
    assert model.checkpoint_bytes(net) == before
    assert trace[0] == pytest.approx(trace[1], abs=1e-12)


def test_separable_blobs_are_learned():
    src = _blobs()
    net = model.init_network(2, 2, make_rng(0))
    net, trace = source.train_source(src, net, 30, 0.01, 64, SmoothingConfig(2), make_rng(1))
    acc = np.mean(model.forward(net, src.x).probs.argmax(1) == src.labels)
    assert acc >= 0.95
    assert trace[-1] <= trace[0]


def test_training_is_deterministic():
    src = _blobs(3)
    outs = []
    for _ in range(2):
        net = model.init_network(2, 2, make_rng(5))
        source.train_source(src, net, 3, 0.05, 32, SmoothingConfig(2), make_rng(6))
        outs.append(model.checkpoint_bytes(net))
    assert outs[0] == outs[1]


def test_loss_trace_csv(tmp_path):
    f = tmp_path / "trace.csv"
    source.write_loss_trace([1.5, 0.25], f)
    assert f.read_text().splitlines() == ["epoch,mean_loss", "1,1.5", "2,0.25"]
