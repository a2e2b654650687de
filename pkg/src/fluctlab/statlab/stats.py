"""Scaling fits, trend tests, jackknife errors and Kolmogorov-Smirnov helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

Z95 = 1.959963984540054


@dataclass(frozen=True)
class ScalingFit:
    """Log-log weighted least-squares fit y ~ c x^slope."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    se: tuple[float, ...]
    slope: float
    intercept: float
    slope_se: float
    ci: tuple[float, float]
    weighted: bool = True
    extra: dict = field(default_factory=dict)

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_power_law(x, y, se=None) -> ScalingFit:
    """Weighted least squares of log y on log x with weights (y / se)^2.

    The weight is the inverse variance of log y under the delta method.  With
    no (or all-zero) standard errors the fit is unweighted and the slope
    error comes from the residuals.  The CI is slope +/- 1.96 SE.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.unique(x).size < 3:
        raise ValueError("need at least 3 distinct abscissae for a scaling fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    se_arr = np.zeros_like(y) if se is None else np.asarray(se, dtype=float)
    lx, ly = np.log(x), np.log(y)
    weighted = bool(np.all(se_arr > 0))
    w = (y / se_arr) ** 2 if weighted else np.ones_like(y)
    A = np.stack([np.ones_like(lx), lx], axis=1)
    AtW = A.T * w
    cov = np.linalg.inv(AtW @ A)
    beta = cov @ (AtW @ ly)
    if weighted:
        slope_se = math.sqrt(cov[1, 1])
    else:
        resid = ly - A @ beta
        dof = max(x.size - 2, 1)
        slope_se = math.sqrt(cov[1, 1] * float(resid @ resid) / dof)
    slope = float(beta[1])
    return ScalingFit(tuple(x), tuple(y), tuple(se_arr), slope, float(beta[0]), slope_se,
                      (slope - Z95 * slope_se, slope + Z95 * slope_se), weighted)


def spearman_trend(x, y) -> float:
    """Spearman rank correlation (0 when y is constant)."""
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return 0.0
    return float(sps.spearmanr(x, y).statistic)


def mean_se(a, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    n = a.shape[axis]
    return a.mean(axis=axis), a.std(axis=axis, ddof=1) / math.sqrt(n)


def jackknife_variance(a, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample variance with its leave-one-out jackknife standard error."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    v, se = jackknife_covariance(a, a)
    return v, se


def jackknife_covariance(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance of a and b over the last axis, with jackknife SE.

    Leave-one-out estimates come from closed-form running sums, O(n).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[-1]
    if n < 3:
        raise ValueError("jackknife needs at least 3 samples")
    ma, mb = a.mean(axis=-1, keepdims=True), b.mean(axis=-1, keepdims=True)
    da, db = a - ma, b - mb
    full = np.sum(da * db, axis=-1) / (n - 1)
    # leave-one-out: S_{-i} = S - n/(n-1) da_i db_i
    loo = (np.sum(da * db, axis=-1, keepdims=True) - n / (n - 1) * da * db) / (n - 2)
    lbar = loo.mean(axis=-1)
    se = np.sqrt((n - 1) / n * np.sum((loo - lbar[..., None]) ** 2, axis=-1))
    return full, se


def ks_normal(sample) -> tuple[float, float]:
    """KS statistic and p-value of the sample against the normal with fitted mean and sd."""
    s = np.asarray(sample, dtype=float)
    sd = s.std(ddof=1)
    if sd == 0:
        return 0.0, 1.0
    res = sps.kstest((s - s.mean()) / sd, "norm")
    return float(res.statistic), float(res.pvalue)


def ks_point_mass(sample, atol: float = 1e-12) -> tuple[float, float]:
    """KS against a point mass at the sample mean: statistic 0, p 1 iff all equal."""
    s = np.asarray(sample, dtype=float)
    if np.ptp(s) <= atol * max(1.0, float(np.abs(s).max())):
        return 0.0, 1.0
    return 1.0, 0.0


def ks_two_sample(a, b) -> tuple[float, float]:
    res = sps.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


def ks_critical_value(n: int, alpha: float) -> float:
    """Exact one-sample two-sided KS critical value D_{n, 1-alpha}."""
    return float(sps.kstwo.ppf(1.0 - alpha, n))


def log_mean_exp(h, axis=None) -> np.ndarray:
    """log(mean(exp(h))) by log-sum-exp.

    When every |h| <= 1 the sum is formed from expm1 without a shift, which
    keeps full relative precision for exponents near zero.
    """
    h = np.asarray(h, dtype=float)
    n = h.size if axis is None else h.shape[axis]
    if h.size and np.max(np.abs(h)) <= 1.0:
        out = np.log1p(np.sum(np.expm1(h), axis=axis) / n)
        return np.asarray(out)
    mx = np.max(h, axis=axis, keepdims=True)
    out = mx + np.log(np.sum(np.exp(h - mx), axis=axis, keepdims=True) / n)
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
