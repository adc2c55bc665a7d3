import math

import numpy as np
import pytest
from scipy import stats as sst

from wns.mu import FiniteMeasure, beta_plus, mu_eps_net
from wns.sticky import (check_covariation, lattice_left_right, max_slope, npoint_sticky,
                        solve_left_right, sticky_pair)


def test_solution_shapes_and_skorohod():
    sol = solve_left_right(0.0, 0.0, 1.0, 0.01, seed=3)
    L, R = sol
    assert L.x.size == R.x.size == 101
    assert sol.skorohod_violations() == []
    assert np.all(sol.D >= 0)
    assert 0 < sol.time_together < 1


def test_start_apart_then_ordered():
    sol = solve_left_right(0.3, -0.3, 2.0, 0.01, seed=1)
    assert sol.D[0] == pytest.approx(-0.6)
    assert sol.skorohod_violations() == []


def test_drift_means_exact():
    r = sticky_pair(0.0, 0.0, 1.0, 0.01, reps=3000, seed=2)
    assert abs(r.drift_L.mean + 1.0) < 4 * r.drift_L.std_err
    assert abs(r.drift_R.mean - 1.0) < 4 * r.drift_R.std_err
    assert r.skorohod_violations == 0 and r.ordering_violations == 0
    assert r.z_positive() > 5


def test_far_apart_is_independent_drifted_bm():
    # started 20 apart the pair almost surely does not meet by T = 1
    r = sticky_pair(-10.0, 10.0, 1.0, 0.01, reps=2000, seed=4, strict=False)
    assert r.together_fraction.mean == 0.0
    assert abs(r.covariation.mean) < 4 * r.covariation.std_err + 1e-12
    d = r.D_T - 20.0  # D_T - D_0 ~ N(2, 2)
    assert sst.kstest(d, sst.norm(2.0, math.sqrt(2.0)).cdf).pvalue > 1e-3


def test_lattice_pair_matches_continuum():
    eps, T = 0.05, 0.5
    lat = lattice_left_right(eps, T, 3000, seed=1)
    con = sticky_pair(0.0, 0.0, T, 0.0025, reps=3000, seed=1).D_T
    rng = np.random.default_rng(0)
    a = lat + rng.uniform(-eps, eps, lat.size)
    b = con + rng.uniform(-eps, eps, con.size)
    assert sst.ks_2samp(a, b).pvalue > 1e-3
    assert abs(lat.mean() - 2 * T) < 4 * lat.std() / math.sqrt(lat.size) + eps


def test_npoint_self_covariation_is_time():
    ens = npoint_sticky(2, 0.0, FiniteMeasure.delta(0.5), T=0.2, eps=0.05, dt_report=0.05,
                        reps=50, seed=1)
    cov = check_covariation(ens, pairs=[(0, 0), (1, 1)])
    for c in cov.covariation:
        assert c.mean == pytest.approx(cov.t, abs=1e-12)


def test_covariation_ratio_exact_finite_eps():
    # per step together: E[dXi dXj] = eps^2 E[(2w - 1)^2] = eps^2 (1 - 4 E[w(1-w)])
    eps = 0.05
    nu = FiniteMeasure.delta(0.5)
    mu = mu_eps_net(0.0, nu, eps)
    ens = npoint_sticky(2, 0.0, nu, T=0.5, eps=eps, dt_report=0.05, reps=4000, seed=6)
    cov = check_covariation(ens, pairs=[(0, 1)])
    a = ens.covariation[:, 0, 1, -1]
    b = ens.coincidence[:, 0, 1, -1]
    want = 1 - 4 * mu.moment(1, 1)
    d = a - want * b
    assert abs(d.mean()) < 4 * d.std(ddof=1) / math.sqrt(d.size)
    assert abs(cov.rel_diff[0] - (want - 1)) < 0.05


def test_max_slope_report():
    nu = FiniteMeasure.delta(0.5)
    ens = npoint_sticky(2, 0.0, nu, T=0.2, eps=0.05, dt_report=0.01, reps=2000, seed=2)
    s = max_slope(ens, 0.2, beta_plus(0.0, nu, 2))
    assert s.target == 2.0
    assert s.slope > 0 and s.stderr > 0 and s.ratio > 0
    with pytest.raises(ValueError):
        check_covariation(npoint_sticky(1, T=0.1, eps=0.1, reps=5))
