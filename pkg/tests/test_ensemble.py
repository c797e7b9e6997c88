import numpy as np
import pytest

from recalboot.datasets import Dataset, gen_friedman_grosse, gen_sl_synthetic
from recalboot.ensemble import (
    draw_bag_counts,
    fit_forest,
    load_forest,
    oob_records,
    predict_mean,
    predict_per_tree,
    save_forest,
)
from recalboot.exceptions import CalibrationError, DomainError
from recalboot.intervals import recalibrate
from recalboot.stats import RngStream


@pytest.fixture(scope="module")
def fg_forest():
    data = gen_friedman_grosse(128, 2.0, RngStream(1, (0,)))
    return fit_forest(data, 64, RngStream(1, (1,)))


def test_bag_counts_row_sums():
    c = draw_bag_counts(2, 2, RngStream(0))
    np.testing.assert_array_equal(c.sum(axis=1), [2, 2])


def test_out_of_bag_fraction_near_inverse_e():
    c = draw_bag_counts(128, 64, RngStream(3))
    frac = np.mean(c == 0)
    assert 0.31 <= frac <= 0.42
    assert frac == pytest.approx((1 - 1 / 128) ** 128, abs=0.03)


def test_bag_streams_are_per_bag():
    a = draw_bag_counts(10, 5, RngStream(4))
    b = draw_bag_counts(10, 8, RngStream(4))
    np.testing.assert_array_equal(a, b[:5])


def test_constant_outputs_predicted_everywhere():
    X = np.random.default_rng(0).random((20, 3))
    d = Dataset(X, np.full(20, 4.5), ["a", "b", "c"], ["y"], [False] * 3)
    f = fit_forest(d, 8, 0)
    np.testing.assert_allclose(predict_per_tree(f, np.random.default_rng(1).random((5, 3))), 4.5)


def test_mean_is_average_of_trees(fg_forest):
    X = np.random.default_rng(2).random((7, 8))
    np.testing.assert_allclose(predict_mean(fg_forest, X), predict_per_tree(fg_forest, X).mean(axis=0))
    assert predict_mean(fg_forest, X[0]).shape == (1,)
    assert predict_per_tree(fg_forest, X[0]).shape == (64, 1)


def test_two_tree_mean():
    X = np.array([[0.0], [1.0]])
    d = Dataset(X, np.array([1.0, 3.0]), ["x"], ["y"], [False])
    f = fit_forest(d, 2, 0)
    t = predict_per_tree(f, [[0.0]])
    assert predict_mean(f, [[0.0]])[0, 0] == pytest.approx(t.mean())


def test_fit_quality_beats_constant_predictor():
    train = gen_friedman_grosse(128, 0.0, 10)
    test = gen_friedman_grosse(500, 0.0, 11)
    f = fit_forest(train, 64, 12)
    rmse = np.sqrt(np.mean((predict_mean(f, test.X) - test.Y) ** 2))
    assert rmse < test.Y.std()


def test_same_seed_same_forest():
    data = gen_friedman_grosse(40, 1.0, 2)
    a = fit_forest(data, 10, RngStream(5))
    b = fit_forest(data, 10, RngStream(5))
    X = np.random.default_rng(0).random((10, 8))
    np.testing.assert_array_equal(predict_per_tree(a, X), predict_per_tree(b, X))
    np.testing.assert_array_equal(a.bag_counts, b.bag_counts)


def test_oob_records_all_rows_usable(fg_forest):
    rec = oob_records(fg_forest)
    assert len(rec) == 128 and rec.n_omitted == 0
    assert np.all(rec.n_oob_trees >= 2)
    assert np.all(rec.std_residual[~rec.zero_spread] >= 0)


def test_oob_records_match_brute_force(fg_forest):
    rec = oob_records(fg_forest)
    preds = predict_per_tree(fg_forest, fg_forest.X_train, standardized=True)
    i = rec.rows[5]
    oob = fg_forest.bag_counts[:, i] == 0
    vals = preds[oob, i, 0]
    assert rec.oob_mean[5, 0] == pytest.approx(vals.mean())
    assert rec.oob_std[5, 0] == pytest.approx(vals.std(ddof=1))
    y = fg_forest.Y_train[i, 0]
    assert rec.std_residual[5, 0] == pytest.approx(abs(vals.mean() - y) / vals.std(ddof=1))
    assert rec.abs_residual[5, 0] == pytest.approx(abs(vals.mean() - y) * fg_forest.standardizer.scale[0])


def test_rows_in_every_bag_are_omitted():
    data = gen_friedman_grosse(12, 1.0, 0)
    f = fit_forest(data, 4, 0)
    f.bag_counts[:, 0] = 1  # pretend row 0 was drawn by every bag
    f.bag_counts[:, 1] = 1
    with pytest.raises(CalibrationError):
        oob_records(f, min_rows=12)
    rec = oob_records(f, min_rows=1)
    assert 0 not in rec.rows and 1 not in rec.rows
    assert rec.n_omitted >= 2


def test_zero_spread_rows_flagged():
    X = np.random.default_rng(0).random((30, 2))
    d = Dataset(X, np.ones(30), ["a", "b"], ["y"], [False, False])
    rec = oob_records(fit_forest(d, 16, 0))
    assert rec.zero_spread.all()
    assert np.isnan(rec.std_residual).all()


def test_forest_needs_two_rows_and_bags():
    d = gen_friedman_grosse(5, 0.0, 0)
    with pytest.raises(DomainError):
        fit_forest(d, 1, 0)


def test_serialisation_round_trip_is_bit_exact(tmp_path, fg_forest):
    recalibrate(fg_forest)
    path = save_forest(fg_forest, tmp_path / "forest.npz")
    loaded = load_forest(path)
    X = np.random.default_rng(3).random((25, 8))
    np.testing.assert_array_equal(predict_per_tree(loaded, X), predict_per_tree(fg_forest, X))
    np.testing.assert_array_equal(loaded.alpha, fg_forest.alpha)
    np.testing.assert_array_equal(loaded.bag_counts, fg_forest.bag_counts)
    assert loaded.p == fg_forest.p


def test_serialisation_with_categories(tmp_path):
    data = gen_sl_synthetic()
    f = fit_forest(data, 8, 1)
    loaded = load_forest(save_forest(f, tmp_path / "f.npz"))
    assert loaded.categories == {"phase": ("A", "B")}
    np.testing.assert_array_equal(predict_per_tree(loaded, data.X), predict_per_tree(f, data.X))
    assert loaded.alpha is None
