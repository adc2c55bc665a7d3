import math

import numpy as np
from scipy import stats as sst

from wns.stats import (Accumulator, binomial_ci, ks_2samp, ks_test, loglog_slope, mean_ci)


def test_mean_ci_matches_normal_interval():
    x = np.random.default_rng(0).normal(3, 2, 500)
    c = mean_ci(x)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert math.isclose(c.mean, x.mean())
    assert math.isclose(c.std_err, se)
    assert math.isclose(c.ci_hi - c.mean, sst.norm.ppf(0.975) * se, rel_tol=1e-9)
    assert c.contains(c.mean) and not c.contains(c.ci_hi + 1)
    assert math.isclose(c.rel_err(x.mean() * 2), 0.5)


def test_accumulator_merge_equals_batch():
    x = np.random.default_rng(1).exponential(size=300)
    a = Accumulator().add(x[:100]).merge(Accumulator().add(x[100:]))
    e, f = a.estimate(), mean_ci(x)
    assert a.count == 300
    assert math.isclose(e.mean, f.mean) and math.isclose(e.std_err, f.std_err, rel_tol=1e-9)


def test_binomial_ci():
    c = binomial_ci(30, 100)
    assert math.isclose(c.mean, 0.3)
    assert c.ci_lo < 0.3 < c.ci_hi


def test_ks_tests():
    rng = np.random.default_rng(2)
    x = rng.exponential(size=2000)
    assert ks_test(x, sst.expon.cdf).pvalue > 1e-3
    assert ks_test(x + 0.5, sst.expon.cdf).pvalue < 1e-6
    assert ks_2samp(x, rng.exponential(size=2000)).pvalue > 1e-3


def test_loglog_slope_exact_power():
    n = np.array([10.0, 100, 1000, 10000])
    f = loglog_slope(n, 3 * n**-0.5)
    assert abs(f.slope + 0.5) < 1e-12 and f.n_points == 4
