"""Recalibrated bootstrap prediction distributions.

The bootstrap standard deviation over tree predictions is rescaled per
output by a factor ``alpha`` chosen so that the ``p``-percentile of the
out-of-bag standard residuals maps onto ``Phi^-1((1 + p) / 2)`` normal
standard deviations. Correlations between outputs come from one of four
estimators (see :class:`CorrelationMethod`); the bootstrap estimator
makes the covariance the alpha-scaled sample covariance of the trees.

Also provides the bias-corrected infinitesimal-jackknife and
jackknife-after-bootstrap covariances, the maximum-likelihood factor and
the input-independent "OOB constant" interval used as baselines.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ensemble import OobRecords, TrainedForest, oob_records, predict_per_tree
from .exceptions import CalibrationError, DomainError, NumericalError
from .stats import correlation_matrix, normal_quantile, percentile

__all__ = [
    "DEFAULT_P",
    "CorrelationMethod",
    "RecalibrationFactor",
    "PredictionDistribution",
    "JackknifeCovariance",
    "interval_multiplier",
    "recalibration_factor",
    "mle_recalibration_factor",
    "recalibrate",
    "recalibrated_sigma",
    "bootstrap_correlation",
    "jackknife_covariance",
    "jackknife_correlation",
    "training_correlation",
    "prediction_distribution",
    "oob_constant_interval",
    "oob_constant_distribution",
]

DEFAULT_P = 0.683
MIN_RECORDS = 8
ALPHA_FLOOR = 1e-6
VARIANCE_FLOOR = 1e-12


class CorrelationMethod(str, enum.Enum):
    TRIVIAL = "trivial"
    TRAINING_DATA = "training-data"
    JACKKNIFE = "jackknife"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class RecalibrationFactor:
    alpha: np.ndarray
    p: float
    usable_rows: np.ndarray
    clamped: np.ndarray


@dataclass(frozen=True)
class PredictionDistribution:
    """Multivariate normal ``N(mean, cov)`` at one input or a batch of inputs.

    Shapes are ``mean (..., d)``, ``cov (..., d, d)`` and
    ``correlation (..., d, d)``; indexing a batch returns a single
    distribution.
    """

    mean: np.ndarray
    cov: np.ndarray
    correlation: np.ndarray

    @property
    def n_outputs(self) -> int:
        return self.mean.shape[-1]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.cov, axis1=-2, axis2=-1))

    def __len__(self):
        if self.mean.ndim == 1:
            raise TypeError("single distribution has no length")
        return self.mean.shape[0]

    def __getitem__(self, idx):
        return PredictionDistribution(self.mean[idx], self.cov[idx], self.correlation[idx])


def interval_multiplier(p: float) -> float:
    """Number of normal standard deviations that cover probability ``p``."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {p!r}")
    return normal_quantile(0.5 * (1.0 + p))


def _std_residuals(oob) -> np.ndarray:
    r = oob.std_residual if isinstance(oob, OobRecords) else np.asarray(oob, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    return np.abs(r)


def _columns(r, min_records=MIN_RECORDS):
    cols = []
    for j in range(r.shape[1]):
        col = r[np.isfinite(r[:, j]), j]
        if col.size < min_records:
            raise CalibrationError(
                f"output {j}: {col.size} usable standard residuals, need {min_records}"
            )
        cols.append(col)
    return cols


def recalibration_factor(oob, p: float = DEFAULT_P) -> RecalibrationFactor:
    """Per-output factor ``percentile(|r|, p) / Phi^-1((1 + p) / 2)``.

    ``oob`` is an :class:`OobRecords` or an (n,) / (n, d) array of
    standard residuals. Zero-spread records (NaN residuals) are skipped.
    """
    eta = interval_multiplier(p)
    cols = _columns(_std_residuals(oob))
    alpha = np.array([percentile(c, p) / eta for c in cols])
    clamped = alpha <= 0.0
    if clamped.any():
        warnings.warn("all standard residuals are zero; recalibration factor clamped", RuntimeWarning)
        alpha = np.where(clamped, ALPHA_FLOOR, alpha)
    return RecalibrationFactor(alpha, p, np.array([c.size for c in cols]), clamped)


def mle_recalibration_factor(oob) -> np.ndarray:
    """Factor maximising the normal log likelihood of the OOB residuals.

    The likelihood ``sum_i -ln(a s_i) - r_i^2 / (2 a^2 s_i^2)`` peaks at
    ``a = sqrt(mean(r~^2))`` where ``r~`` are the standard residuals.
    """
    cols = _columns(_std_residuals(oob), min_records=1)
    return np.array([np.sqrt(np.mean(c * c)) for c in cols])


def recalibrate(forest: TrainedForest, p: float = DEFAULT_P) -> RecalibrationFactor:
    """Compute and store the forest's recalibration factors."""
    factor = recalibration_factor(oob_records(forest), p)
    forest.alpha = factor.alpha
    forest.p = p
    return factor


def _alpha(forest):
    if forest.alpha is None:
        raise DomainError("forest has no recalibration factor; call recalibrate() first")
    return forest.alpha


def _tree_std(per_tree):
    """Sample standard deviation over trees (axis 0, divisor B - 1)."""
    return per_tree.std(axis=0, ddof=1)


def recalibrated_sigma(forest: TrainedForest, X, standardized: bool = False) -> np.ndarray:
    """``alpha_j`` times the tree-wise standard deviation of output ``j``."""
    per_tree = predict_per_tree(forest, X, standardized=True)
    sigma = _alpha(forest) * _tree_std(per_tree)
    if not standardized:
        sigma = sigma * forest.standardizer.scale
    return sigma


def bootstrap_correlation(per_tree) -> np.ndarray:
    """Pearson correlation between outputs over the tree-wise predictions.

    ``per_tree`` is (B, d) for one input or (B, n, d) for a batch.
    """
    t = np.asarray(per_tree, dtype=float)
    if t.shape[0] < 2:
        raise DomainError("bootstrap correlation needs at least two trees")
    rho, _ = correlation_matrix(np.moveaxis(t, 0, -2))
    return rho


class JackknifeCovariance(NamedTuple):
    ij: np.ndarray
    jab: np.ndarray
    average: np.ndarray
    clamped: np.ndarray  # (..., d) diagonal of `average` hit the floor
    n_dropped: int


def _floor_diagonal(c):
    d = c.shape[-1]
    idx = np.arange(d)
    diag = c[..., idx, idx]
    low = diag < VARIANCE_FLOOR
    c[..., idx, idx] = np.where(low, VARIANCE_FLOOR, diag)
    return low


def jackknife_covariance(forest: TrainedForest, X, standardized: bool = False) -> JackknifeCovariance:
    """Bias-corrected IJ and JaB covariances between outputs, and their mean.

    With ``dev_b = t_b - mean`` over trees:

    * IJ: ``sum_i A_i A_i^T - (N-1)/B^2 sum_b dev_b dev_b^T`` with
      ``A_i = sum_b (Y_bi - 1) dev_b / B``;
    * JaB: ``(N-1)/N sum_i (oob_mean_i - mean)(...)^T
      - (e-1)(N-1)/B^2 sum_b dev_b dev_b^T``, skipping rows that are in
      every bag.

    The bias terms are ``(N-1)/B`` times the bag-averaged covariance of
    the tree predictions, hence the ``B^2``.

    Diagonals below ``1e-12`` are floored (finite-B bias correction can
    overshoot). Results are (..., d, d) in original units unless
    ``standardized``.
    """
    single = np.ndim(X) == 1
    t = predict_per_tree(forest, X, standardized=True)
    if single:
        t = t[:, None, :]
    B, N = forest.bag_counts.shape
    counts = forest.bag_counts.astype(float)
    mean = t.mean(axis=0)
    dev = t - mean[None]
    boot = np.einsum("bnj,bnk->njk", dev, dev)

    infl = np.einsum("bi,bnj->inj", counts - 1.0, dev) / B
    ij = np.einsum("inj,ink->njk", infl, infl) - (N - 1) / B**2 * boot

    oob = (counts == 0).astype(float)
    n_oob = oob.sum(axis=0)
    keep = n_oob > 0
    if not keep.any():
        raise NumericalError("no training row is out of bag for any tree")
    oob_mean = np.einsum("bi,bnj->inj", oob[:, keep], t) / n_oob[keep][:, None, None]
    delta = oob_mean - mean[None]
    jab = (N - 1) / N * np.einsum("inj,ink->njk", delta, delta) - (np.e - 1) * (N - 1) / B**2 * boot

    average = 0.5 * (ij + jab)
    _floor_diagonal(ij)
    _floor_diagonal(jab)
    clamped = _floor_diagonal(average)
    if not standardized:
        s = forest.standardizer.scale
        outer = s[:, None] * s[None, :]
        ij, jab, average = ij * outer, jab * outer, average * outer
    if single:
        ij, jab, average, clamped = ij[0], jab[0], average[0], clamped[0]
    return JackknifeCovariance(ij, jab, average, clamped, int(N - keep.sum()))


def _nearest_correlation(rho):
    """Clip negative eigenvalues and restore the unit diagonal."""
    w, v = np.linalg.eigh(rho)
    if w.min() >= 0.0:
        return rho
    fixed = (v * np.clip(w, 0.0, None)) @ v.T
    sd = np.sqrt(np.clip(np.diag(fixed), 1e-300, None))
    fixed = np.clip(fixed / np.outer(sd, sd), -1.0, 1.0)
    np.fill_diagonal(fixed, 1.0)
    return fixed


def jackknife_correlation(forest: TrainedForest, X) -> np.ndarray:
    """Correlation implied by the averaged jackknife covariance.

    Pairs involving a floored variance get correlation 0. The pairwise
    estimates need not form a positive semi-definite matrix when there are
    more than two outputs, so each matrix is projected back onto the PSD
    cone (negative eigenvalues clipped, unit diagonal restored).
    """
    jk = jackknife_covariance(forest, X, standardized=True)
    c = jk.average
    var = np.diagonal(c, axis1=-2, axis2=-1)
    rho = np.clip(c / np.sqrt(var[..., :, None] * var[..., None, :]), -1.0, 1.0)
    bad = jk.clamped[..., :, None] | jk.clamped[..., None, :]
    rho = np.where(bad, 0.0, rho)
    idx = np.arange(c.shape[-1])
    rho[..., idx, idx] = 1.0
    if c.shape[-1] > 2:
        flat = rho.reshape(-1, c.shape[-1], c.shape[-1])
        for k in range(flat.shape[0]):
            flat[k] = _nearest_correlation(flat[k])
        rho = flat.reshape(rho.shape)
    return rho


def training_correlation(forest_or_outputs) -> np.ndarray:
    """Pearson correlation between outputs over the training rows."""
    if isinstance(forest_or_outputs, TrainedForest):
        Y = forest_or_outputs.Y_train
    else:
        Y = np.asarray(forest_or_outputs, dtype=float)
    rho, _ = correlation_matrix(Y)
    return rho


def prediction_distribution(forest: TrainedForest, X, method=CorrelationMethod.BOOTSTRAP,
                            train_corr=None) -> PredictionDistribution:
    """Recalibrated prediction distribution at ``X`` (original units).

    ``cov_jk = rho_jk * sigma_j * sigma_k`` where ``sigma`` is the
    recalibrated standard deviation and ``rho`` comes from ``method``.
    For ``training-data`` the correlation defaults to the Pearson
    correlation of the forest's training outputs.
    """
    method = CorrelationMethod(method)
    alpha = _alpha(forest)
    single = np.ndim(X) == 1
    t = predict_per_tree(forest, X, standardized=True)
    if single:
        t = t[:, None, :]
    n, d = t.shape[1], t.shape[2]
    scale = forest.standardizer.scale
    mean = forest.standardizer.inverse(t.mean(axis=0))
    sigma = alpha * _tree_std(t) * scale

    if method is CorrelationMethod.TRIVIAL:
        rho = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    elif method is CorrelationMethod.TRAINING_DATA:
        tc = training_correlation(forest) if train_corr is None else np.asarray(train_corr, dtype=float)
        if tc.shape != (d, d):
            raise DomainError(f"train_corr must be {d}x{d}")
        rho = np.broadcast_to(tc, (n, d, d)).copy()
    elif method is CorrelationMethod.JACKKNIFE:
        rho = jackknife_correlation(forest, X if not single else np.asarray(X)[None, :])
    else:
        rho = bootstrap_correlation(t)
    cov = rho * sigma[:, :, None] * sigma[:, None, :]
    dist = PredictionDistribution(mean, cov, rho)
    return dist[0] if single else dist


def oob_constant_interval(forest: TrainedForest, p: float = DEFAULT_P) -> np.ndarray:
    """Half-width per output: the ``p``-percentile of raw |OOB residual|.

    The same width applies at every input.
    """
    records = oob_records(forest)
    return np.array([percentile(records.abs_residual[:, j], p) for j in range(forest.n_outputs)])


def oob_constant_distribution(forest: TrainedForest, X, p: float = DEFAULT_P) -> PredictionDistribution:
    """Independent normals with ``sigma = half_width / Phi^-1((1 + p) / 2)``."""
    sigma = oob_constant_interval(forest, p) / interval_multiplier(p)
    single = np.ndim(X) == 1
    t = predict_per_tree(forest, X, standardized=True)
    if single:
        t = t[:, None, :]
    n, d = t.shape[1], t.shape[2]
    mean = forest.standardizer.inverse(t.mean(axis=0))
    eye = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    cov = eye * (sigma[:, None] * sigma[None, :])
    dist = PredictionDistribution(mean, cov, eye)
    return dist[0] if single else dist
