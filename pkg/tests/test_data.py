import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrust import data
from qtrust.seeding import derive


def test_noiseless_points_on_arcs():
    ds = data.make_two_moons(4, 0.0, np.random.default_rng(1))
    upper, lower = ds.X[ds.y == -1], ds.X[ds.y == 1]
    assert np.allclose(np.hypot(upper[:, 0], upper[:, 1]), 1.0)
    assert np.all(upper[:, 1] >= 0)
    assert np.allclose(np.hypot(1.0 - lower[:, 0], 0.5 - lower[:, 1]), 1.0)


@given(n=st.integers(2, 500))
def test_class_counts_balanced(n):
    ds = data.make_two_moons(n, 0.2, np.random.default_rng(n))
    assert abs(int((ds.y == 1).sum()) - int((ds.y == -1).sum())) <= 1
    assert len(ds) == n


def test_too_few_samples():
    with pytest.raises(ValueError):
        data.make_two_moons(1, 0.2, np.random.default_rng(0))


def test_knn_oracle_separates_moons():
    ds = data.make_two_moons(1500, 0.2, np.random.default_rng(11))
    train, test = data.split(ds, 0.6, np.random.default_rng(12))
    d = ((test.X[:, None, :] - train.X[None, :, :]) ** 2).sum(-1)
    nearest = np.argsort(d, axis=1)[:, :5]
    pred = np.sign(train.y[nearest].sum(axis=1))
    assert np.mean(pred == test.y) >= 0.9


def test_default_split_sizes():
    train, test = data.two_moons_split(rng=derive(0, "data"))
    assert (len(train), len(test)) == (900, 600)
    assert (train.y == 1).sum() == 450 and (test.y == 1).sum() == 300


@settings(max_examples=30, deadline=None)
@given(n=st.integers(40, 400), frac=st.floats(0.1, 0.9), seed=st.integers(0, 1000))
def test_split_is_stratified_disjoint_cover(n, frac, seed):
    ds = data.make_two_moons(n, 0.2, np.random.default_rng(seed))
    ds = data.Dataset(ds.X + np.arange(n)[:, None] * 1e3, ds.y)  # make rows unique
    train, test = data.split(ds, frac, np.random.default_rng(seed + 1))
    rows = {tuple(r) for r in np.vstack([train.X, test.X])}
    assert len(rows) == n == len(train) + len(test)
    for c in (-1, 1):
        n_c = int((ds.y == c).sum())
        assert abs(int((train.y == c).sum()) - frac * n_c) <= 1


def test_split_rejects_degenerate_sizes():
    ds = data.make_two_moons(10, 0.2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        data.split(ds, 0.05, np.random.default_rng(0))


def test_split_rejects_bad_fraction():
    ds = data.make_two_moons(20, 0.2, np.random.default_rng(0))
    for f in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            data.split(ds, f, np.random.default_rng(0))


def test_standardization_fit_on_train_only():
    train, test = data.two_moons_split(rng=derive(3, "data"))
    assert np.allclose(train.X.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(train.X.std(axis=0), 1.0, atol=1e-9)
    assert not np.allclose(test.X.mean(axis=0), 0.0, atol=1e-3)
    assert train.standardization is test.standardization


def test_standardize_roundtrip_and_identity(rng):
    X = rng.normal(3.0, 2.0, (50, 2))
    stats = data.fit_standardization(X)
    assert np.allclose(stats.invert(stats.apply(X)), X, atol=1e-12)
    Z = stats.apply(X)
    again = data.fit_standardization(Z)
    assert np.allclose(again.apply(Z), Z, atol=1e-9)


def test_constant_feature_rejected():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    with pytest.raises(ValueError):
        data.fit_standardization(X)


def test_generation_is_deterministic():
    a = data.make_two_moons(100, 0.2, derive(5, "data"))
    b = data.make_two_moons(100, 0.2, derive(5, "data"))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_labels_validated():
    with pytest.raises(ValueError):
        data.Dataset(np.zeros((2, 2)), np.array([0, 1]))
    with pytest.raises(ValueError):
        data.Dataset(np.zeros((3, 2)), np.array([1, -1]))


def test_csv_roundtrip(tmp_path):
    ds = data.make_two_moons(31, 0.2, np.random.default_rng(2))
    path = tmp_path / "moons.csv"
    data.write_csv(ds, path)
    back = data.read_csv(path)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
    assert path.read_text().splitlines()[0] == "x0,x1,label"
