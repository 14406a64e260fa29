"""Small statistics helpers: slope fits with confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t

__all__ = ["SlopeFit", "fit_loglog_slope", "fit_semilog_slope", "mean_stderr"]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n_points: int


def _ols_line(x: np.ndarray, y: np.ndarray, weights: np.ndarray | None) -> SlopeFit:
    n = x.size
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != x.shape or np.any(w <= 0):
            raise ValueError("weights must be positive and match the points")
    wsum = w.sum()
    xbar = np.sum(w * x) / wsum
    ybar = np.sum(w * y) / wsum
    sxx = np.sum(w * (x - xbar) ** 2)
    if sxx <= 0:
        raise ValueError("points have no spread in the abscissa")
    slope = np.sum(w * (x - xbar) * (y - ybar)) / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    dof = n - 2
    if dof > 0:
        s2 = np.sum(w * resid**2) / dof
        stderr = float(np.sqrt(s2 / sxx))
        half = float(student_t.ppf(0.975, dof)) * stderr
    else:
        stderr = 0.0
        half = 0.0
    return SlopeFit(slope=float(slope), intercept=float(intercept), stderr=stderr,
                    ci_low=float(slope - half), ci_high=float(slope + half),
                    n_points=n)


def fit_loglog_slope(x, y, weights=None) -> SlopeFit:
    """Least-squares slope of log y against log x, with a 95% CI.

    Needs at least three strictly positive points; the CI uses the
    t-distribution with n-2 degrees of freedom.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs strictly positive coordinates")
    return _ols_line(np.log(xs), np.log(ys), weights)


def fit_semilog_slope(x, y, weights=None) -> SlopeFit:
    """Least-squares slope of log y against x (decay/growth-rate fits)."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(ys <= 0):
        raise ValueError("semilog fit needs strictly positive ordinates")
    return _ols_line(xs, np.log(ys), weights)


def mean_stderr(values) -> tuple[float, float]:
    """Sample mean and its standard error (ddof=1)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
