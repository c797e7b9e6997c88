import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from recalboot.exceptions import MetricError
from recalboot.intervals import PredictionDistribution
from recalboot.metrics import (
    evaluate,
    mahalanobis,
    median_nlpd,
    nlpd,
    standard_confidence,
    standard_error,
)
from recalboot.stats import chi2_quantile


def _dist(mean, cov):
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    sd = np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1))
    corr = cov / (sd[..., :, None] * sd[..., None, :])
    return PredictionDistribution(mean, cov, corr)


def _univariate(mean, sigma):
    mean = np.asarray(mean, dtype=float)[:, None]
    sigma = np.asarray(sigma, dtype=float)
    return _dist(mean, (sigma ** 2)[:, None, None])


# ---------------------------------------------------------------- standard error


def test_standard_error_hand_example():
    d = _univariate([0.0, 0.0], [1.0, 1.0])
    assert standard_error(d, [1.0, 3.0]) == pytest.approx(2.0)


def test_standard_error_of_calibrated_normal_is_half_normal_mean(gen):
    n = 200_000
    sigma = gen.uniform(0.5, 3.0, n)
    y = gen.normal(0.0, sigma)
    se = standard_error(_univariate(np.zeros(n), sigma), y)
    assert se == pytest.approx(math.sqrt(2.0 / math.pi), abs=5e-3)


def test_standard_error_rejects_multivariate_and_zero_sigma():
    with pytest.raises(MetricError):
        standard_error(_dist(np.zeros((1, 2)), np.eye(2)[None]), np.zeros((1, 2)))
    d = PredictionDistribution(np.zeros((2, 1)), np.array([[[1.0]], [[0.0]]]), np.ones((2, 1, 1)))
    with pytest.raises(MetricError, match="point 1"):
        standard_error(d, [0.0, 0.0])


def test_shape_mismatch_and_empty_batch():
    with pytest.raises(MetricError):
        nlpd(_dist(np.zeros((2, 2)), np.tile(np.eye(2), (2, 1, 1))), np.zeros((3, 2)))
    with pytest.raises(MetricError):
        nlpd(_dist(np.zeros((0, 2)), np.zeros((0, 2, 2)) + np.eye(2)), np.zeros((0, 2)))


# ---------------------------------------------------------------- Mahalanobis


def test_mahalanobis_identity_is_euclidean():
    assert mahalanobis(_dist([0.0, 0.0], np.eye(2)), [3.0, 4.0]) == pytest.approx(5.0)


def test_mahalanobis_diagonal_scaling():
    d = _dist([0.0, 0.0], [[4.0, 0.0], [0.0, 1.0]])
    assert mahalanobis(d, [2.0, 1.0]) == pytest.approx(math.sqrt(2.0))


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_mahalanobis_matches_explicit_inverse(seed, d):
    g = np.random.default_rng(seed)
    A = g.standard_normal((d, d))
    cov = A @ A.T + 0.5 * np.eye(d)
    mean, y = g.standard_normal(d), g.standard_normal(d)
    r = mean - y
    expected = math.sqrt(r @ np.linalg.inv(cov) @ r)
    assert mahalanobis(_dist(mean, cov), y) == pytest.approx(expected, rel=1e-9)


def test_perfect_correlation_is_repaired_but_zero_covariance_is_reported():
    cov = np.array([[[1.0, 1.0], [1.0, 1.0]]])
    d = PredictionDistribution(np.zeros((1, 2)), cov, np.ones((1, 2, 2)))
    assert np.isfinite(mahalanobis(d, np.array([[1.0, 1.0]])))
    d = PredictionDistribution(np.zeros((1, 2)), np.zeros((1, 2, 2)), np.eye(2)[None])
    with pytest.raises(MetricError, match="singular"):
        mahalanobis(d, np.array([[1.0, 1.0]]))


# ---------------------------------------------------------------- standard confidence


def test_standard_confidence_hand_example():
    d = _univariate([0.0, 0.0], [1.0, 1.0])
    assert standard_confidence(d, [0.5, 2.0]) == pytest.approx(0.5)


@pytest.mark.parametrize("p_c", [0.5, 0.683, 0.9])
def test_standard_confidence_matches_coverage_in_two_dims(p_c):
    g = np.random.default_rng(7)
    n = 100_000
    cov = np.array([[2.0, 0.9], [0.9, 1.0]])
    y = g.multivariate_normal([0.0, 0.0], cov, n)
    d = _dist(np.zeros((n, 2)), np.tile(cov, (n, 1, 1)))
    assert standard_confidence(d, y, p_c) == pytest.approx(p_c, abs=0.01)


def test_standard_confidence_uses_chi2_cutoff():
    cut = chi2_quantile(0.683, 3)
    d = _dist(np.zeros((2, 3)), np.tile(np.eye(3), (2, 1, 1)))
    y = np.array([[math.sqrt(cut) * 0.999, 0, 0], [math.sqrt(cut) * 1.001, 0, 0]])
    assert standard_confidence(d, y) == 0.5


# ---------------------------------------------------------------- NLPD


def test_nlpd_at_the_mean():
    assert nlpd(_dist([0.0], [[1.0]]), [0.0]) == pytest.approx(0.5 * math.log(2 * math.pi))
    assert nlpd(_dist([0.0, 0.0], np.eye(2)), [0.0, 0.0]) == pytest.approx(math.log(2 * math.pi))


@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.1, 10.0))
def test_nlpd_under_covariance_scaling(seed, d, t):
    g = np.random.default_rng(seed)
    A = g.standard_normal((d, d))
    cov = A @ A.T + np.eye(d)
    mean = g.standard_normal(d)
    base = nlpd(_dist(mean, cov), mean)
    assert nlpd(_dist(mean, t * cov), mean) == pytest.approx(base + 0.5 * d * math.log(t), rel=1e-9, abs=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_nlpd_matches_scipy_logpdf(seed, d):
    from scipy.stats import multivariate_normal

    g = np.random.default_rng(seed)
    A = g.standard_normal((d, d))
    cov = A @ A.T + 0.3 * np.eye(d)
    mean, y = g.standard_normal(d), g.standard_normal(d)
    expected = -multivariate_normal(mean, cov).logpdf(y)
    assert nlpd(_dist(mean, cov), y) == pytest.approx(expected, rel=1e-9)


def test_median_nlpd_and_evaluate():
    mean = np.zeros((3, 1))
    d = _univariate(mean[:, 0], [1.0, 1.0, 1.0])
    y = np.array([0.0, 1.0, 2.0])
    per_point = 0.5 * math.log(2 * math.pi) + 0.5 * y ** 2
    assert median_nlpd(d, y) == pytest.approx(per_point[1])
    rep = evaluate(d, y)
    assert rep.n_points == 3
    assert rep.standard_error == pytest.approx(1.0)
    assert rep.standard_confidence == pytest.approx(2 / 3)
    assert rep.as_dict()["median_nlpd"] == pytest.approx(per_point[1])
    multi = evaluate(_dist(np.zeros((2, 2)), np.tile(np.eye(2), (2, 1, 1))), np.zeros((2, 2)))
    assert multi.standard_error is None
