import numpy as np
import pytest
from scipy import stats

from sfmix import data
from sfmix.data import ShiftSpec, UnlabeledView
from sfmix.errors import FormatError, InvalidArgumentError
from sfmix.numkit import make_rng


def test_generation_is_deterministic():
    spec = ShiftSpec(seed=4)
    s1, t1 = data.generate_shift_pair(spec)
    s2, t2 = data.generate_shift_pair(spec)
    assert s1.x.tobytes() == s2.x.tobytes() and t1.x.tobytes() == t2.x.tobytes()
    assert s1.labels.tobytes() == s2.labels.tobytes() and t1.labels.tobytes() == t2.labels.tobytes()


def test_rotation_preserves_pairwise_distances():
    rotated = data.generate_shift_pair(ShiftSpec(n_per_domain=200, angle=50.0, seed=1))[1]
    flat = data.generate_shift_pair(ShiftSpec(n_per_domain=200, angle=0.0, seed=1))[1]
    assert rotated.labels.tobytes() == flat.labels.tobytes()
    d_rot = np.linalg.norm(rotated.x[:, None] - rotated.x[None], axis=-1)
    d_flat = np.linalg.norm(flat.x[:, None] - flat.x[None], axis=-1)
    np.testing.assert_allclose(d_rot, d_flat, atol=1e-9)
    assert not np.allclose(rotated.x, flat.x)


def test_antipodal_half_turn_swaps_clusters():
    spec = ShiftSpec(n_classes=2, layout="ring", angle=180.0, radius=2.0, n_per_domain=500, seed=0)
    _, target = data.generate_shift_pair(spec)
    centers = data.class_centers(2, "ring", 2.0)
    for k in range(2):
        np.testing.assert_allclose(target.x[target.labels == k].mean(0), centers[1 - k], atol=0.1)


def test_label_skew_matches_proportions():
    p = (0.55, 0.25, 0.15, 0.05)
    _, target = data.generate_shift_pair(ShiftSpec(family="label-skew-blobs", proportions=p,
                                                   n_per_domain=4000, seed=2))
    counts = np.bincount(target.labels, minlength=4)
    # chi-square goodness of fit at the 0.1% level
    assert stats.chisquare(counts, np.array(p) * counts.sum()).pvalue > 1e-3
    src, _ = data.generate_shift_pair(ShiftSpec(family="label-skew-blobs", proportions=p, seed=2))
    assert stats.chisquare(np.bincount(src.labels, minlength=4)).pvalue > 1e-3


def test_two_moons():
    s, t = data.generate_shift_pair(ShiftSpec(family="two-moons", n_classes=2, angle=30.0, seed=0))
    assert s.input_dim == 2 and set(np.unique(t.labels)) == {0, 1}
    with pytest.raises(InvalidArgumentError):
        data.generate_shift_pair(ShiftSpec(family="two-moons", n_classes=3))


@pytest.mark.parametrize("kwargs", [dict(n_classes=1), dict(n_per_domain=0), dict(angle=360.0),
                                    dict(family="label-skew-blobs"),
                                    dict(proportions=(0.5, 0.5, 0.5, -0.5)), dict(family="spiral")])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidArgumentError):
        data.generate_shift_pair(ShiftSpec(**kwargs))


def test_augment():
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(data.augment(x, 0.0, make_rng(0)), x)
    a = data.augment(np.zeros((100_000, 1)), 1.0, make_rng(1))
    assert abs(a[:, 0].std() - 1.0) <= 0.02
    assert data.augment(x, 0.3, make_rng(5)).tobytes() == data.augment(x, 0.3, make_rng(5)).tobytes()


def test_batches():
    assert [b.tolist() for b in data.batches(7, 3, shuffle=False)] == [[0, 1, 2], [3, 4, 5], [6]]
    epoch = data.batches(103, 10, make_rng(0))
    flat = np.concatenate(epoch)
    assert sorted(flat.tolist()) == list(range(103))
    again = data.batches(103, 10, make_rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(epoch, again))
    with pytest.raises(InvalidArgumentError):
        data.batches(0, 4, make_rng(0))
    with pytest.raises(InvalidArgumentError):
        data.batches(5, 0, make_rng(0))


def test_load_csv_examples(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("1,2,0\n3,4,1\n5,6,0\n")
    ds = data.load_csv(f, labeled=True)
    assert ds.n_classes >= 2 and ds.input_dim == 2 and ds.indices.tolist() == [0, 1, 2]
    assert ds.labels.tolist() == [0, 1, 0]
    g = tmp_path / "e.csv"
    data.write_csv(ds, g)
    again = data.load_csv(g, labeled=True)
    np.testing.assert_array_equal(again.x, ds.x)
    np.testing.assert_array_equal(again.labels, ds.labels)


def test_csv_round_trip_exact(tmp_path):
    s, _ = data.generate_shift_pair(ShiftSpec(n_per_domain=50))
    f = tmp_path / "s.csv"
    data.write_csv(s, f)
    back = data.load_csv(f, labeled=True, n_classes=4)
    assert back.x.tobytes() == s.x.tobytes()


@pytest.mark.parametrize("text,row", [("a,b\n", 1), ("1,2,0\n1,2\n", 2), ("1,2,0\n1,2,9\n", 2),
                                      ("1,2,0\n1,2,0.5\n", 2)])
def test_load_csv_errors(tmp_path, text, row):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(FormatError, match=f"row {row}"):
        data.load_csv(f, labeled=True, n_classes=3)


def test_unlabeled_view_has_no_labels():
    _, t = data.generate_shift_pair(ShiftSpec(n_per_domain=40))
    view = t.unlabeled()
    assert isinstance(view, UnlabeledView)
    assert not hasattr(view, "labels")
    assert all("label" not in name for name in vars(view))
    assert len(view) == 40 and view.input_dim == 2


def test_split_target():
    _, t = data.generate_shift_pair(ShiftSpec(n_per_domain=100))
    train, test = data.split_target(t, 0.2, make_rng(0))
    assert len(train) == 80 and len(test) == 20
    assert sorted(np.concatenate([train.origin, test.origin]).tolist()) == list(range(100))
    np.testing.assert_array_equal(train.x, t.x[train.origin])
