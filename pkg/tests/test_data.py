import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sskl.data import (
    Dataset,
    load_csv,
    make_split,
    percent_reduction,
    rmse,
    validation_count,
)
from sskl.errors import EmptyAfterCleaning, EmptyVectors, InsufficientData, NoNumericColumns, ZeroBaseline


def toy_dataset(n=1300, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) * [1.0, 5.0, 0.1] + [0.0, 10.0, -3.0]
    return Dataset("toy", X, X @ [1.0, -0.5, 2.0] + rng.standard_normal(n))


# -- csv -------------------------------------------------------------------------

def test_load_three_rows(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("1,2\n3,4\n5,6\n")
    ds = load_csv(p)
    np.testing.assert_array_equal(ds.X, [[1], [3], [5]])
    np.testing.assert_array_equal(ds.y, [2, 4, 6])
    assert ds.report.rows_dropped == 0 and ds.report.header is None


def test_malformed_row_is_dropped_and_reported(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b,target\n1,2,3\n4,,6\n7,8,9\n1,2\n10,11,x\n")
    ds = load_csv(p)
    assert ds.report.header == ["a", "b", "target"]
    assert ds.n_rows == 2 and ds.report.rows_dropped == 3
    assert ds.report.dropped_lines == [3, 5, 6]


def test_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv")
    one = tmp_path / "one.csv"
    one.write_text("1\n2\n")
    with pytest.raises(NoNumericColumns):
        load_csv(one)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\nfoo,bar\n")
    with pytest.raises(EmptyAfterCleaning):
        load_csv(bad)


@pytest.mark.skipif(not os.environ.get("SSKL_SKILLCRAFT"), reason="set SSKL_SKILLCRAFT to a Skillcraft CSV")
def test_skillcraft_shape():
    ds = load_csv(os.environ["SSKL_SKILLCRAFT"])
    assert (ds.n_rows, ds.n_features) == (3325, 18)


# -- split -----------------------------------------------------------------------

def test_n100_gives_90_10_and_1000_test():
    view = make_split(toy_dataset(), 100, seed=0)
    assert (len(view.train_idx), len(view.val_idx), len(view.test_idx)) == (90, 10, 1000)
    assert len(view.unlabeled_idx) == 1300 - 1100


@pytest.mark.parametrize("n, val", [(2, 1), (5, 1), (14, 1), (15, 2), (50, 5), (100, 10), (105, 11), (300, 30)])
def test_validation_rounding(n, val):
    assert validation_count(n) == val


def test_same_seed_same_partition():
    ds = toy_dataset()
    a, b = make_split(ds, 50, seed=7), make_split(ds, 50, seed=7)
    for name in ("train_idx", "val_idx", "test_idx", "unlabeled_idx"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.manifest() == b.manifest()


@settings(max_examples=25)
@given(n=st.integers(2, 250), seed=st.integers(0, 10 ** 6))
def test_partitions_are_disjoint_and_cover(n, seed):
    ds = toy_dataset()
    view = make_split(ds, n, seed)
    parts = [view.train_idx, view.val_idx, view.test_idx, view.unlabeled_idx]
    allidx = np.concatenate(parts)
    assert len(np.unique(allidx)) == len(allidx) == ds.n_rows
    assert len(view.train_idx) + len(view.val_idx) == n


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        make_split(toy_dataset(n=1050), 100, seed=0)


def test_trial_seeds_give_distinct_labeled_sets():
    ds = toy_dataset()
    sets = {tuple(sorted(np.concatenate([v.train_idx, v.val_idx])))
            for v in (make_split(ds, 100, seed) for seed in range(10))}
    assert len(sets) == 10


# -- standardization ------------------------------------------------------------

def test_labeled_train_is_z_scored():
    view = make_split(toy_dataset(), 100, seed=1)
    np.testing.assert_allclose(view.X_train.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(view.X_train.std(0), 1, atol=1e-12)
    np.testing.assert_allclose(view.y_train.mean(), 0, atol=1e-12)


def test_constant_column_maps_to_zero():
    ds = toy_dataset()
    X = ds.X.copy()
    X[:, 1] = 4.2
    view = make_split(Dataset("c", X, ds.y), 50, seed=0)
    assert np.all(view.X_train[:, 1] == 0) and np.all(view.X_test[:, 1] == 0)


def test_target_round_trip():
    view = make_split(toy_dataset(), 60, seed=2)
    y = np.random.default_rng(0).standard_normal(20) * 30
    np.testing.assert_allclose(view.unstandardize_y(view.standardize_y(y)), y, rtol=0, atol=1e-12)


def test_constants_ignore_test_and_unlabeled_rows():
    ds = toy_dataset()
    view = make_split(ds, 100, seed=3)
    X, y = ds.X.copy(), ds.y.copy()
    rng = np.random.default_rng(0)
    outside = np.concatenate([view.test_idx, view.unlabeled_idx])
    X[outside] = rng.permutation(X[outside]) * 3.0
    y[outside] = rng.permutation(y[outside]) + 100
    other = make_split(Dataset("perturbed", X, y), 100, seed=3)
    assert np.array_equal(other.x_mean, view.x_mean) and np.array_equal(other.x_std, view.x_std)
    assert other.y_mean == view.y_mean and other.y_std == view.y_std


def test_validation_and_test_targets_stay_in_original_units():
    ds = toy_dataset()
    view = make_split(ds, 100, seed=4)
    assert np.array_equal(view.y_val, ds.y[view.val_idx])
    assert np.array_equal(view.y_test, ds.y[view.test_idx])


# -- metrics ---------------------------------------------------------------------

def test_metric_examples():
    y = np.array([1.0, -2.0, 3.5])
    assert rmse(y, y) == 0.0
    assert percent_reduction(1.0, 0.0) == 100.0
    assert percent_reduction(1.0, 0.9) == pytest.approx(10.0)
    assert percent_reduction(1.0, 1.2) == pytest.approx(-20.0)
    with pytest.raises(EmptyVectors):
        rmse([], [])
    with pytest.raises(ZeroBaseline):
        percent_reduction(0.0, 1.0)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30),
       st.randoms(use_true_random=False))
def test_rmse_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = rmse([p for p, _ in pairs], [t for _, t in pairs])
    b = rmse([p for p, _ in shuffled], [t for _, t in shuffled])
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
