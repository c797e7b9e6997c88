"""Deterministic statistical primitives.

Quantiles, percentiles, Pearson correlation, a repaired Cholesky
factorisation and multivariate-normal sampling, plus a small seeded RNG
stream type that can be split into independent, reproducible sub-streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DomainError, NumericalError

__all__ = [
    "RngStream",
    "normal_cdf",
    "normal_quantile",
    "chi2_quantile",
    "percentile",
    "pearson",
    "correlation_matrix",
    "repair_covariance",
    "cholesky_psd",
    "mvn_sample",
]

_CORR_CLAMP = 1.0 - 1e-9
_JITTER_START = 1e-10
_JITTER_STOP = 1e-6


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, key)``.

    ``key`` is a path of non-negative integers; ``child`` appends to it so
    each trial, bag or acquisition round gets its own independent stream.
    Streams are plain values and safe to pass between threads.
    """

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or any(k < 0 for k in self.key):
            raise DomainError("seed and stream ids must be non-negative")

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(q):
    """Inverse standard-normal CDF."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(~((q_arr > 0.0) & (q_arr < 1.0))):
        raise DomainError(f"normal_quantile needs 0 < q < 1, got {q!r}")
    out = special.ndtri(q_arr)
    return float(out) if out.ndim == 0 else out


def chi2_quantile(q, d: int):
    """Inverse CDF of the chi-squared distribution with ``d`` degrees of freedom."""
    if int(d) != d or d < 1:
        raise DomainError(f"chi2_quantile needs an integer d >= 1, got {d!r}")
    q_arr = np.asarray(q, dtype=float)
    if np.any(~((q_arr > 0.0) & (q_arr < 1.0))):
        raise DomainError(f"chi2_quantile needs 0 < q < 1, got {q!r}")
    # gammaincinv is accurate in both tails, unlike 1 - chdtri(1 - q)
    out = 2.0 * special.gammaincinv(0.5 * d, q_arr)
    return float(out) if out.ndim == 0 else out


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile with rank position ``h = p (n - 1)``.

    ``p`` is a probability, not a percentage.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError("percentile of an empty list")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"percentile needs 0 <= p <= 1, got {p!r}")
    return float(np.quantile(arr, p, method="linear"))


def pearson(a, b, *, with_flag: bool = False):
    """Sample Pearson correlation, clamped to [-1, 1].

    A constant input has no defined correlation; 0.0 is returned instead
    and, with ``with_flag=True``, the second element of the returned pair
    is True.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("pearson needs two 1-D sequences of equal length")
    if a.size < 2:
        raise DomainError("pearson needs at least two values")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        return (0.0, True) if with_flag else 0.0
    r = float(np.clip((da @ db) / np.sqrt(saa * sbb), -1.0, 1.0))
    return (r, False) if with_flag else r


def correlation_matrix(samples):
    """Pearson correlation between the columns of ``samples``.

    ``samples`` has shape (..., n, d); the result has shape (..., d, d).
    Returns ``(rho, degenerate)`` where ``degenerate`` marks the columns
    with zero spread. Correlations involving such a column are set to 0;
    the diagonal is always 1.
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[-2] < 2:
        raise DomainError("correlation needs at least two samples")
    dev = x - x.mean(axis=-2, keepdims=True)
    cross = np.einsum("...bj,...bk->...jk", dev, dev)
    var = np.diagonal(cross, axis1=-2, axis2=-1)
    degenerate = var <= 0.0
    safe = np.where(degenerate, 1.0, var)
    denom = np.sqrt(safe[..., :, None] * safe[..., None, :])
    rho = np.clip(cross / denom, -1.0, 1.0)
    bad = degenerate[..., :, None] | degenerate[..., None, :]
    rho = np.where(bad, 0.0, rho)
    d = x.shape[-1]
    idx = np.arange(d)
    rho[..., idx, idx] = 1.0
    return rho, degenerate


def repair_covariance(cov):
    """Symmetrise and clamp correlations of a single covariance matrix."""
    a = np.asarray(cov, dtype=float)
    a = 0.5 * (a + a.T)
    diag = np.diag(a).copy()
    pos = diag > 0.0
    sd = np.sqrt(np.where(pos, diag, 0.0))
    outer = sd[:, None] * sd[None, :]
    limit = _CORR_CLAMP * outer
    over = np.abs(a) > limit
    np.fill_diagonal(over, False)
    if over.any():
        a = np.where(over, np.sign(a) * limit, a)
    return a


def _cholesky_one(cov):
    a = repair_covariance(cov)
    scale = float(np.max(np.diag(a))) if a.size else 0.0
    if scale <= 0.0:
        if np.any(a != 0.0):
            raise NumericalError("covariance has no positive variance", matrix=cov)
        return np.zeros_like(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(a.shape[0])
    jitter = _JITTER_START
    while jitter <= _JITTER_STOP * (1 + 1e-9):
        try:
            return np.linalg.cholesky(a + jitter * scale * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("Cholesky failed after PSD repair", matrix=np.asarray(cov))


def cholesky_psd(cov):
    """Lower Cholesky factor after PSD repair; accepts a (..., d, d) stack.

    Repair symmetrises, clamps correlation magnitudes to ``1 - 1e-9`` and,
    if needed, adds diagonal jitter from ``1e-10`` up to ``1e-6`` times the
    largest variance. An all-zero matrix factors to zeros.
    """
    a = np.asarray(cov, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DomainError("covariance must be square")
    if a.ndim == 2:
        return _cholesky_one(a)
    flat = a.reshape(-1, a.shape[-1], a.shape[-1])
    out = np.empty_like(flat)
    for i, m in enumerate(flat):
        out[i] = _cholesky_one(m)
    return out.reshape(a.shape)


def mvn_sample(mean, cov, n: int, rng) -> np.ndarray:
    """Draw ``n`` samples ``mean + L z`` with ``L`` the repaired Cholesky factor."""
    mean = np.asarray(mean, dtype=float).ravel()
    chol = cholesky_psd(cov)
    if chol.shape != (mean.size, mean.size):
        raise DomainError("mean and covariance dimensions disagree")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    z = gen.standard_normal((int(n), mean.size))
    return mean + z @ chol.T
