import math

import numpy as np
import pytest

from wns.coupling import _arrow_paths
from wns.lattice import (BOTH, LatticeWindow, gen_kill_field, gen_net_field, gen_web_field)
from wns.paths import (PointSet, TracePolicy, density_curve, density_estimate,
                       density_from_samples, density_samples, meeting_points, meeting_time,
                       meeting_time_samples, net_steps, point_set, psi, relsep_density_target,
                       survival_curve, trace_path, web_density_target, web_steps)
from wns.rng import SeedSpec


def test_closed_forms():
    assert web_density_target(1.0) == pytest.approx(1 / math.sqrt(math.pi))
    assert psi(math.inf) == 2.0
    assert psi(50.0) == pytest.approx(2.0, abs=1e-12)
    # small t: the coalescing term dominates
    assert psi(1e-6) == pytest.approx(web_density_target(1e-6), rel=1e-2)
    assert relsep_density_target(0.5) == pytest.approx(2 * psi(0.5) ** 2)
    assert relsep_density_target(0.5) == pytest.approx(9.39, abs=0.01)
    assert net_steps(0.5, 0.02) == 1250 and web_steps(2.0, 200) == 80000


def test_pointset_validation():
    p = PointSet(3, [1, 3, 5])
    assert 3 in p and 4 not in p and len(p) == 3
    assert PointSet(3, [3]).issubset(p)
    with pytest.raises(ValueError):
        PointSet(0, [2, 1])


def test_trace_follows_arrows(window, seed):
    f = gen_net_field(window, 0.3, seed)
    for pol in (TracePolicy.leftmost(), TracePolicy.rightmost(), TracePolicy.uniform(seed)):
        p = trace_path(f, (0, 0), pol)
        xs, ts = p.positions(), p.times()
        assert p.terminated_by in ("boundary", "horizon")
        for k in range(len(p)):
            c = f.code(int(xs[k]), int(ts[k]))
            assert c & (1 if xs[k + 1] < xs[k] else 2)
            if c == BOTH and pol.kind != "uniform":
                assert xs[k + 1] - xs[k] == (-1 if pol.kind == "leftmost" else 1)


def test_leftmost_is_left_of_rightmost(window, seed):
    f = gen_net_field(window, 0.3, seed)
    lo = trace_path(f, (0, 0), TracePolicy.leftmost()).positions()
    hi = trace_path(f, (0, 0), TracePolicy.rightmost()).positions()
    n = min(lo.size, hi.size)
    assert np.all(lo[:n] <= hi[:n])


def test_kill_terminates(seed):
    w = LatticeWindow(-30, 30, 0, 40)
    f = gen_kill_field(w, 0.0, 0.3, seed)
    p = trace_path(f, (0, 0))
    assert p.terminated_by == "killed"


def test_horizon(window, seed):
    f = gen_web_field(window, seed)
    assert len(trace_path(f, (0, 0), horizon=5)) <= 5
    with pytest.raises(ValueError):
        trace_path(f, (1, 0))


def test_web_point_set_is_endpoints(window, seed):
    f = gen_web_field(window, seed)
    starts = window.sites_at(0)[5:-5]
    ps = point_set(f, starts, 6)
    ends = set()
    for x in starts:
        p = trace_path(f, (int(x), 0), horizon=6)
        if len(p) == 6:
            ends.add(p.end[0])
    assert set(ps.positions.tolist()) == ends


def test_net_point_set_brute_force(seed):
    w = LatticeWindow(-14, 14, 0, 6)
    for r in range(10):
        f = gen_net_field(w, 0.3, seed.replica(r))
        starts = [-2, 0, 2, 4]
        ends = {p[-1] for x in starts for p in _arrow_paths(f.arrows, w, x, 0, 6)}
        assert set(point_set(f, starts, 6).positions.tolist()) == ends


def test_coalescing_paths_stay_together(window, seed):
    f = gen_web_field(window, seed)
    a = trace_path(f, (-2, 0)).positions()
    b = trace_path(f, (2, 0)).positions()
    n = min(a.size, b.size)
    hit = np.flatnonzero(a[:n] == b[:n])
    if hit.size:
        assert np.all(a[hit[0]:n] == b[hit[0]:n])
    m = meeting_time(f, (-2, 0), (2, 0), 16)
    assert (m.tau is None) == (hit.size == 0)


def test_meeting_points_web(seed):
    w = LatticeWindow(-40, 40, 0, 20)
    f = gen_web_field(w, seed)
    A = list(range(-10, 11, 2))
    mp = meeting_points(f, A, 20)
    # each first meeting merges two paths: start count = final + meetings + losses
    assert len(A) == len(mp.final) + len(mp) + mp.losses


def _gap_survival(n):
    """Exact P(tau > k), k <= n, for two walkers 2 apart (gap/2 a lazy walk)."""
    p = np.zeros(2 * n + 4)
    c = 1
    p[c] = 1.0  # index = gap/2, absorbed at 0
    out = []
    for _ in range(n):
        q = 0.5 * p
        q[1:] += 0.25 * p[:-1]
        q[:-1] += 0.25 * p[1:]
        q[0] = 0.0
        p = q
        out.append(p.sum())
    return np.array(out)


def test_meeting_time_tail_exact_small_n():
    taus = meeting_time_samples(20000, 200, 3)
    ns = np.array([1, 2, 5, 20, 100])
    emp = survival_curve(taus, ns)
    ex = _gap_survival(100)[ns - 1]
    assert np.all(np.abs(emp - ex) <= 4.5 * np.sqrt(ex * (1 - ex) / 20000))


def test_survival_censoring():
    taus = np.array([1, 5, -1, 10])
    assert list(survival_curve(taus, [0, 4, 9, 100])) == [1.0, 0.75, 0.5, 0.25]


def test_density_rough_and_blocks():
    est = density_estimate("web", 1.0, 30, 5, scale=40, width=20)
    assert est.estimate.rel_err(web_density_target(1.0)) < 0.1
    a = density_samples("web", [0.5, 1.0], 6, 9, scale=30, width=10)
    b = np.vstack([density_samples("web", [0.5, 1.0], 3, 9, scale=30, width=10),
                   density_samples("web", [0.5, 1.0], 3, 9, scale=30, width=10, first_replica=3)])
    assert np.array_equal(a, b)
    c = density_curve("web", [0.5, 1.0], 6, 9, scale=30, width=10)
    d = density_from_samples("web", [0.5, 1.0], a, 9, scale=30)
    assert [e.estimate.mean for e in c] == [e.estimate.mean for e in d]


def test_net_density_rough():
    (est,) = density_curve("net", [1.0], 20, 4, eps=0.05, scale=1.0, width=20)
    assert est.estimate.rel_err(psi(1.0)) < 0.1
