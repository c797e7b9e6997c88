"""Calibration metrics for (multivariate) normal prediction distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import MetricError, NumericalError
from .intervals import DEFAULT_P, PredictionDistribution
from .stats import chi2_quantile, cholesky_psd

__all__ = [
    "MetricReport",
    "standard_error",
    "mahalanobis",
    "standard_confidence",
    "nlpd",
    "median_nlpd",
    "evaluate",
]


@dataclass(frozen=True)
class MetricReport:
    standard_error: float | None
    standard_confidence: float
    median_nlpd: float
    n_points: int
    p_c: float

    def as_dict(self):
        return {
            "standard_error": self.standard_error,
            "standard_confidence": self.standard_confidence,
            "median_nlpd": self.median_nlpd,
            "n_points": self.n_points,
            "p_c": self.p_c,
        }


def _batch(dist: PredictionDistribution, observed):
    mean = np.asarray(dist.mean, dtype=float)
    cov = np.asarray(dist.cov, dtype=float)
    y = np.asarray(observed, dtype=float)
    if mean.ndim == 1:
        mean, cov = mean[None], cov[None]
        y = y.reshape(1, -1)
    elif y.ndim == 1 and mean.shape[-1] == 1:
        y = y[:, None]
    if y.shape != mean.shape:
        raise MetricError(f"observed shape {y.shape} does not match predictions {mean.shape}")
    if mean.shape[0] == 0:
        raise MetricError("no evaluation points")
    return mean, cov, y


def _factor(cov):
    try:
        chol = cholesky_psd(cov)
    except NumericalError as exc:
        raise MetricError(f"covariance not factorable: {exc}") from exc
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    if np.any(diag <= 0.0):
        bad = int(np.flatnonzero(np.any(diag <= 0.0, axis=-1))[0])
        raise MetricError(f"covariance of point {bad} is singular")
    return chol, diag


def _squared_mahalanobis(mean, cov, y):
    chol, diag = _factor(cov)
    r = mean - y
    z = np.linalg.solve(chol, r[..., None])[..., 0]
    return np.sum(z * z, axis=-1), diag


def standard_error(dist: PredictionDistribution, observed) -> float:
    """Mean of ``|mean - y| / sigma`` over univariate points."""
    mean, cov, y = _batch(dist, observed)
    if mean.shape[-1] != 1:
        raise MetricError("standard error is defined for univariate predictions only")
    sigma = np.sqrt(cov[:, 0, 0])
    zero = np.flatnonzero(~(sigma > 0.0))
    if zero.size:
        raise MetricError(f"predicted sigma is zero at point {int(zero[0])}")
    return float(np.mean(np.abs(mean[:, 0] - y[:, 0]) / sigma))


def mahalanobis(dist: PredictionDistribution, observed):
    """``sqrt(r^T cov^-1 r)`` via a Cholesky solve; scalar for one point."""
    single = np.ndim(dist.mean) == 1
    mean, cov, y = _batch(dist, observed)
    m2, _ = _squared_mahalanobis(mean, cov, y)
    out = np.sqrt(m2)
    return float(out[0]) if single else out


def standard_confidence(dist: PredictionDistribution, observed, p_c: float = DEFAULT_P) -> float:
    """Fraction of points with squared Mahalanobis distance within the chi2 ``p_c`` cutoff."""
    mean, cov, y = _batch(dist, observed)
    cutoff = chi2_quantile(p_c, mean.shape[-1])
    m2, _ = _squared_mahalanobis(mean, cov, y)
    return float(np.mean(m2 <= cutoff))


def nlpd(dist: PredictionDistribution, observed):
    """Negative log density of each observation under its prediction distribution."""
    single = np.ndim(dist.mean) == 1
    mean, cov, y = _batch(dist, observed)
    m2, diag = _squared_mahalanobis(mean, cov, y)
    d = mean.shape[-1]
    logdet = 2.0 * np.sum(np.log(diag), axis=-1)
    out = 0.5 * (d * np.log(2.0 * np.pi) + logdet + m2)
    return float(out[0]) if single else out


def median_nlpd(dist: PredictionDistribution, observed) -> float:
    return float(np.median(np.atleast_1d(nlpd(dist, observed))))


def evaluate(dist: PredictionDistribution, observed, p_c: float = DEFAULT_P) -> MetricReport:
    """All three metrics; the standard error only for univariate predictions."""
    mean, cov, y = _batch(dist, observed)
    batch = PredictionDistribution(mean, cov, cov)
    se = standard_error(batch, y) if mean.shape[-1] == 1 else None
    return MetricReport(
        standard_error=se,
        standard_confidence=standard_confidence(batch, y, p_c),
        median_nlpd=median_nlpd(batch, y),
        n_points=mean.shape[0],
        p_c=p_c,
    )
