import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sfmix import data, model, pseudo
from sfmix.errors import InvalidArgumentError, StateError
from sfmix.numkit import make_rng
from sfmix.pseudo import MemoryBank, PseudoConfig


def test_frequency_weight_example():
    out = pseudo.frequency_weight([[0.6, 0.4], [0.9, 0.1]])
    np.testing.assert_allclose(out[0], [0.24 / 0.56, 0.32 / 0.56], atol=1e-12)
    np.testing.assert_allclose(out[0], [0.42857, 0.57143], atol=1e-5)
    assert out[0].argmax() == 1


def test_frequency_weight_trivial_cases():
    np.testing.assert_allclose(pseudo.frequency_weight(np.full((3, 4), 0.25)), 0.25, atol=1e-15)
    np.testing.assert_array_equal(pseudo.frequency_weight([[0.0, 1.0, 0.0]]), [[0.0, 1.0, 0.0]])
    # a class with zero mass in the batch is clamped, not divided by zero
    out = pseudo.frequency_weight([[1.0, 0.0], [1.0, 0.0]])
    assert np.all(np.isfinite(out))
    with pytest.raises(InvalidArgumentError):
        pseudo.frequency_weight(np.zeros((0, 3)))


batch = arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(2, 6)),
               elements=st.floats(1e-3, 1.0)).map(lambda a: a / a.sum(1, keepdims=True))


@given(batch)
def test_frequency_weight_on_simplex(p):
    out = pseudo.frequency_weight(p)
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(1), 1.0, atol=1e-9)


def _bank(features, preds):
    bank = MemoryBank(len(features), np.shape(features)[1], np.shape(preds)[1])
    bank.features[:] = features
    bank.preds[:] = preds
    bank.initialized[:] = True
    return bank


def test_aggregate_hand_example():
    feats = np.array([[1.0, 0.0], [1.0, 0.2], [1.0, -0.3], [-1.0, 0.0]])
    preds = np.array([[0.3, 0.7], [1.0, 0.0], [0.0, 1.0], [0.2, 0.8]])
    q = pseudo.aggregate(0, _bank(feats, preds), PseudoConfig(m=2))
    np.testing.assert_allclose(q, [0.5, 0.5], atol=1e-15)


def test_aggregate_excludes_self_and_identical_neighbors():
    feats = np.array([[1.0, 0.0]] * 5)
    preds = np.tile([0.1, 0.2, 0.7], (5, 1))
    preds[2] = [1.0, 0.0, 0.0]
    q = pseudo.aggregate(np.array([2]), _bank(feats, preds), PseudoConfig(m=4))
    np.testing.assert_allclose(q, [[0.1, 0.2, 0.7]], atol=1e-15)
    assert 2 not in pseudo.neighbors([2], _bank(feats, preds), 4)[0]


def test_aggregate_off_returns_own_prediction():
    feats = make_rng(0).normal(size=(6, 3))
    preds = np.eye(3)[[0, 1, 2, 0, 1, 2]]
    q = pseudo.aggregate([1, 4], _bank(feats, preds), PseudoConfig(m=2, aggregate=False))
    np.testing.assert_array_equal(q, preds[[1, 4]])


def test_aggregate_errors():
    bank = MemoryBank(4, 2, 2)
    with pytest.raises(StateError):
        pseudo.aggregate(0, bank, PseudoConfig(m=2))
    bank.initialized[:] = True
    bank.features[:] = 1.0
    with pytest.raises(InvalidArgumentError):
        pseudo.aggregate(0, bank, PseudoConfig(m=4))
    with pytest.raises(InvalidArgumentError):
        PseudoConfig(m=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_aggregate_on_simplex(seed, m):
    rng = make_rng(seed)
    p = rng.dirichlet(np.ones(4), size=12)
    q = pseudo.aggregate(np.arange(12), _bank(rng.normal(size=(12, 3)), p), PseudoConfig(m))
    assert np.all(q >= 0)
    np.testing.assert_allclose(q.sum(1), 1.0, atol=1e-12)


def test_init_and_update_bank():
    _, t = data.generate_shift_pair(data.ShiftSpec(n_per_domain=150))
    view = t.unlabeled()
    net = model.init_network(2, 4, make_rng(0))
    bank = pseudo.init_banks(view, net, 64)
    assert bank.ready
    np.testing.assert_allclose(bank.preds.sum(1), 1.0, atol=1e-12)
    fwd = model.forward(net, view.x)
    np.testing.assert_allclose(bank.features, fwd.feature, atol=1e-15)
    np.testing.assert_allclose(bank.preds[64:128], pseudo.frequency_weight(fwd.probs[64:128]), atol=1e-15)
    again = pseudo.init_banks(view, net, 64)
    assert again.preds.tobytes() == bank.preds.tobytes()

    before = bank.copy()
    new_p = np.array([[0.9, 0.05, 0.03, 0.02], [0.1, 0.2, 0.3, 0.4]])
    pseudo.update_bank(bank, [5, 9], np.ones((2, 16)), new_p)
    np.testing.assert_array_equal(bank.features[[5, 9]], 1.0)
    np.testing.assert_allclose(bank.preds[[5, 9]], pseudo.frequency_weight(new_p))
    untouched = np.setdiff1d(np.arange(150), [5, 9])
    assert np.array_equal(bank.preds[untouched], before.preds[untouched])
    with pytest.raises(InvalidArgumentError):
        pseudo.update_bank(bank, [150], np.ones((1, 16)), new_p[:1])


def test_dump_csv(tmp_path):
    bank = _bank(np.eye(2), np.array([[0.2, 0.8], [0.6, 0.4]]))
    bank.dump_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines() == ["index,argmax,max_prob", "0,1,0.8", "1,0,0.6"]
