"""Confidence intervals, KS tests and power-law fits used by every estimator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class EstimateCI:
    mean: float
    ci_lo: float
    ci_hi: float
    n_samples: int
    std_err: float = float("nan")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)

    def contains(self, x: float) -> bool:
        return self.ci_lo <= x <= self.ci_hi

    def scaled(self, c: float) -> "EstimateCI":
        lo, hi = sorted((self.ci_lo * c, self.ci_hi * c))
        return EstimateCI(self.mean * c, lo, hi, self.n_samples, self.std_err * abs(c))

    def rel_err(self, target: float) -> float:
        return abs(self.mean - target) / abs(target)

    def to_dict(self):
        return {"mean": self.mean, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
                "n_samples": self.n_samples, "std_err": self.std_err}


def mean_ci(samples, level: float = 0.95) -> EstimateCI:
    """Normal-approximation confidence interval for the mean."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    m = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(x.size))
    z = float(_st.norm.ppf(0.5 + level / 2))
    return EstimateCI(m, m - z * se, m + z * se, int(x.size), se)


@dataclass
class Accumulator:
    """Merge-associative running moments (count, sum, sum of squares)."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, values) -> "Accumulator":
        v = np.asarray(values, dtype=float).ravel()
        self.count += v.size
        self.total += float(v.sum())
        self.total_sq += float(np.dot(v, v))
        return self

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.count + other.count, self.total + other.total,
                           self.total_sq + other.total_sq)

    def estimate(self, level: float = 0.95) -> EstimateCI:
        if self.count < 2:
            raise ValueError("need at least 2 samples")
        n = self.count
        m = self.total / n
        var = max(self.total_sq - n * m * m, 0.0) / (n - 1)
        se = np.sqrt(var / n)
        z = float(_st.norm.ppf(0.5 + level / 2))
        return EstimateCI(m, m - z * se, m + z * se, n, float(se))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n: int


def ks_test(samples, cdf) -> KSResult:
    """One-sample Kolmogorov-Smirnov test against a callable cdf."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < 10:
        raise ValueError("need at least 10 samples")
    if not callable(cdf):
        raise TypeError("cdf must be callable")
    vals = np.asarray(cdf(x), dtype=float)
    if vals.shape != x.shape or np.any(~np.isfinite(vals)) or np.any((vals < 0) | (vals > 1)):
        raise ValueError("cdf must map samples into [0, 1]")
    if np.any(np.diff(vals) < -1e-12):
        raise ValueError("cdf is not non-decreasing")
    r = _st.kstest(x, cdf)
    return KSResult(float(r.statistic), float(r.pvalue), int(x.size))


def ks_2samp(a, b) -> KSResult:
    r = _st.ks_2samp(np.asarray(a, float), np.asarray(b, float))
    return KSResult(float(r.statistic), float(r.pvalue), int(len(a) + len(b)))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


def loglog_slope(xs, ys) -> SlopeFit:
    """Least-squares slope of log(ys) against log(xs)."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("xs and ys differ in length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    r = _st.linregress(np.log(x), np.log(y))
    return SlopeFit(float(r.slope), float(r.stderr), float(r.intercept), int(x.size))


def binomial_ci(k: int, n: int, level: float = 0.95) -> EstimateCI:
    p = k / n
    se = np.sqrt(p * (1 - p) / n)
    z = float(_st.norm.ppf(0.5 + level / 2))
    return EstimateCI(p, p - z * se, p + z * se, n, float(se))
