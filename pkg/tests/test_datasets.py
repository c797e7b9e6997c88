import textwrap

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from recalboot.datasets import (
    Dataset,
    Standardizer,
    add_linear_correlated_output,
    add_quadratic_output,
    cubic,
    friedman_grosse,
    friedman_silverman,
    gen_correlated_outputs,
    gen_cubic,
    gen_friedman_grosse,
    gen_friedman_silverman,
    gen_sl_synthetic,
    gen_tophat,
    load_csv,
    load_schema,
    split,
    tophat,
)
from recalboot.exceptions import DomainError, IngestionError
from recalboot.stats import RngStream, pearson


def _one_output(y):
    y = np.asarray(y, dtype=float)
    return Dataset(np.arange(y.size)[:, None], y, ["x0"], ["y0"], [False])


# ---------------------------------------------------------------- test functions


def test_tophat_and_cubic_values():
    np.testing.assert_array_equal(tophat([0.2, 0.5, 0.9, -0.2, -0.5]), [1.0, 0.5, 0.0, 1.0, 0.5])
    assert cubic(-1.0) == -1.0
    assert cubic(0.5) == 0.125


def test_friedman_grosse_substitution():
    x = np.zeros(8)
    x[2] = 0.5
    assert friedman_grosse(x)[0] == pytest.approx(0.0, abs=1e-12)
    expected = 10 * np.sin(np.pi / 4) + 0 + 5 + 2.5
    assert friedman_grosse(np.full(8, 0.5))[0] == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(14.571, abs=1e-3)


def test_friedman_silverman_substitution():
    x = np.zeros(12)
    x[1] = 0.5
    assert friedman_silverman(x)[0] == pytest.approx(2.1, abs=1e-12)
    x2 = x.copy()
    x2[2] += 1.0 / 3.0
    assert friedman_silverman(x2)[0] - friedman_silverman(x)[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("maker", [gen_tophat, gen_cubic, gen_friedman_grosse, gen_friedman_silverman])
def test_generators_are_pure_functions_of_seed(maker):
    a = maker(20, 0.5, RngStream(4))
    b = maker(20, 0.5, RngStream(4))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Y, b.Y)


def test_noiseless_generator_is_deterministic_in_x():
    d = gen_friedman_grosse(30, 0.0, 1)
    np.testing.assert_array_equal(d.Y[:, 0], friedman_grosse(d.X))
    assert d.X.shape == (30, 8)
    assert gen_friedman_silverman(5, 0.0, 1).X.shape == (5, 12)


def test_noise_only_touches_outputs():
    clean = gen_friedman_grosse(500, 0.0, 9)
    noisy = gen_friedman_grosse(500, 2.0, 9)
    np.testing.assert_array_equal(clean.X, noisy.X)
    assert np.std(noisy.Y - clean.Y) == pytest.approx(2.0, rel=0.1)


# ---------------------------------------------------------------- derived outputs


@pytest.mark.parametrize("rho", [-0.9, 0.0, 0.5, 0.9, 0.98])
@pytest.mark.parametrize("n", [3, 10, 128])
def test_linear_output_has_exact_correlation(rho, n):
    base = gen_friedman_grosse(n, 0.0, 17)
    d = add_linear_correlated_output(base, rho, 18)
    assert pearson(d.Y[:, 0], d.Y[:, 1]) == pytest.approx(rho, abs=1e-10)


def test_linear_output_rho_one_is_proportional():
    d = add_linear_correlated_output(gen_friedman_grosse(20, 0.0, 1), 1.0, 2)
    assert pearson(d.Y[:, 0], d.Y[:, 1]) == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=50).filter(lambda v: np.ptp(v) > 1e-3),
       st.floats(-0.99, 0.99), st.integers(0, 2**31))
def test_linear_output_exact_rho_property(values, rho, seed):
    d = add_linear_correlated_output(_one_output(values), rho, seed)
    assert pearson(d.Y[:, 0], d.Y[:, 1]) == pytest.approx(rho, abs=1e-8)


def test_linear_output_rejects_constant_source():
    with pytest.raises(DomainError):
        add_linear_correlated_output(_one_output([1.0, 1.0, 1.0]), 0.5, 0)


def test_quadratic_output():
    d = add_quadratic_output(_one_output([1.0, 2.0, 3.0]), 0.0, 0)
    np.testing.assert_allclose(d.Y[:, 1], [1.0, 0.0, 1.0])
    a = add_quadratic_output(_one_output([1.0, 4.0, 9.0]), 0.5, RngStream(3))
    b = add_quadratic_output(_one_output([1.0, 4.0, 9.0]), 0.5, RngStream(3))
    np.testing.assert_array_equal(a.Y, b.Y)


def test_three_output_problem_shape():
    d = gen_correlated_outputs("friedman-grosse", 64, 2.0, 5)
    assert d.output_names == ("y0", "y1", "y2")
    assert d.Y.shape == (64, 3)
    clean = gen_correlated_outputs("friedman-grosse", 64, 0.0, 5)
    assert pearson(clean.Y[:, 0], clean.Y[:, 1]) == pytest.approx(0.9, abs=1e-10)


def test_sl_synthetic_dataset():
    d = gen_sl_synthetic()
    assert d.n_rows == 128
    assert d.input_names[-1] == "phase" and d.is_categorical[-1]
    a = d.X[:, -1] == 0
    assert pearson(d.Y[a, 0], d.Y[a, 1]) == pytest.approx(0.98, abs=1e-10)
    np.testing.assert_allclose(d.Y[~a, 1], np.sqrt(30.0**2 - d.Y[~a, 0] ** 2))
    assert np.sum((d.Y[:, 0] > 22) & (d.Y[:, 1] > 22)) == 2


# ---------------------------------------------------------------- standardisation


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=30))
def test_standardizer_round_trip(values):
    y = np.asarray(values)[:, None]
    s = Standardizer.fit(y)
    np.testing.assert_allclose(s.inverse(s.transform(y)), y, atol=1e-12 * (1 + np.abs(y).max()))


def test_standardizer_constant_column():
    s = Standardizer.fit(np.array([[3.0], [3.0]]))
    assert s.scale[0] == 1.0
    np.testing.assert_array_equal(s.transform([[3.0]]), [[0.0]])


# ---------------------------------------------------------------- CSV ingestion


SCHEMA = textwrap.dedent(
    """\
    columns:
      kind: {type: categorical, role: input, levels: [a, b]}
      x: {type: real, role: input}
      temp: {type: real, role: filter, min: 20, max: 25}
      y: {type: real, role: output}
    """
)


def _write(tmp_path, body, schema=SCHEMA):
    (tmp_path / "s.yaml").write_text(schema)
    (tmp_path / "d.csv").write_text(body)
    return tmp_path / "d.csv", load_schema(tmp_path / "s.yaml")


def test_csv_dedup_averages_outputs(tmp_path):
    path, schema = _write(tmp_path, "kind,x,temp,y\na,1.0,22,10\nb,2.0,22,7\na,1.0,21,20\n")
    d = load_csv(path, schema)
    assert d.n_rows == 2
    np.testing.assert_allclose(d.Y[:, 0], [15.0, 7.0])
    assert d.categories["kind"] == ("a", "b")
    np.testing.assert_array_equal(d.X[:, 0], [0, 1])


def test_csv_drops_incomplete_and_out_of_range(tmp_path):
    path, schema = _write(tmp_path, "kind,x,temp,y\na,1.0,22,\nb,2.0,22,7\na,3.0,400,1\n")
    d = load_csv(path, schema)
    assert d.n_rows == 1
    assert d.Y[0, 0] == 7.0
    assert d.input_names == ("kind", "x")


def test_csv_parse_error_has_context(tmp_path):
    path, schema = _write(tmp_path, "kind,x,temp,y\na,1.0,22,10\nb,oops,22,7\n")
    with pytest.raises(IngestionError, match=r"row 3.*'x'"):
        load_csv(path, schema)


def test_csv_unknown_column_and_empty_result(tmp_path):
    path, schema = _write(tmp_path, "kind,x,y\na,1.0,10\n")
    with pytest.raises(IngestionError, match="temp"):
        load_csv(path, schema)
    path, schema = _write(tmp_path, "kind,x,temp,y\na,1.0,99,10\n")
    with pytest.raises(IngestionError, match="no rows"):
        load_csv(path, schema)


def test_csv_undeclared_level(tmp_path):
    path, schema = _write(tmp_path, "kind,x,temp,y\nc,1.0,22,10\n")
    with pytest.raises(IngestionError, match="undeclared"):
        load_csv(path, schema)


def test_schema_rejects_unknown_keys(tmp_path):
    with pytest.raises(IngestionError, match="colour"):
        _write(tmp_path, "", schema="columns:\n  x: {type: real, colour: red}\n")


# ---------------------------------------------------------------- splitting


def test_uniform_split_disjoint_cover():
    d = gen_friedman_grosse(30, 0.0, 3)
    tr, te = split(d, 20, 10, RngStream(1))
    rows = np.vstack([tr.X, te.X])
    assert sorted(map(tuple, rows)) == sorted(map(tuple, d.X))
    tr2, _ = split(d, 20, 10, RngStream(1))
    np.testing.assert_array_equal(tr.X, tr2.X)


def test_stratified_split_counts():
    n_t, n_c = 100, 50
    kind = np.r_[np.zeros(n_t), np.ones(n_c)]
    X = np.c_[kind, np.arange(n_t + n_c)]
    d = Dataset(X, np.arange(n_t + n_c, dtype=float), ["test_type", "x"], ["y"], [True, False],
                categories={"test_type": ("tension", "compression")})
    tr, te = split(d, 64, 32, RngStream(0), strategy="stratified", stratify_by="test_type",
                   train_counts={"tension": 60, "compression": 4}, test_counts={"compression": 32})
    assert np.sum(tr.X[:, 0] == 0) == 60 and np.sum(tr.X[:, 0] == 1) == 4
    assert np.all(te.X[:, 0] == 1) and te.n_rows == 32
    assert not set(tr.X[:, 1]) & set(te.X[:, 1])


def test_split_infeasible():
    d = gen_friedman_grosse(10, 0.0, 3)
    with pytest.raises(DomainError):
        split(d, 8, 5, 0)
