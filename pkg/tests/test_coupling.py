from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wns.coupling import (_arrow_paths, check_finite_graph, fingraph_survey, finite_graph,
                          pmrca_census, relevant_separation_points, resolve_law,
                          sample_web_in_net, site_law, switch_law, switch_web_to_net)
from wns.lattice import (BOTH, LEFT, RIGHT, LatticeWindow, gen_environment, gen_net_field,
                         gen_web_field)
from wns.mu import MuSpec
from wns.paths import reachable
from wns.rng import SeedSpec


@settings(max_examples=50, deadline=None)
@given(st.fractions(0, 1))
def test_site_law_round_trips(eps):
    net, web = site_law("net", eps), site_law("web")
    assert sum(net.values()) == 1
    assert resolve_law(net) == web
    assert switch_law(web, eps) == net
    assert resolve_law(switch_law(web, eps)) == web


def test_resolve_with_environment_law():
    net = site_law("net", Fraction(1, 10))
    out = resolve_law(net, Fraction(1, 3))
    assert out[RIGHT] == Fraction(9, 20) + Fraction(1, 30)


def test_web_in_net_empirical(seed):
    w = LatticeWindow(-300, 300, 0, 150)
    net = gen_net_field(w, 0.2, seed)
    web, signs = sample_web_in_net(net, "fair", seed)
    m = w.mask()
    both = (net.arrows == BOTH) & m
    assert signs.covers(net) and signs.n_signs() == both.sum()
    assert np.array_equal(web.arrows[m & ~both], net.arrows[m & ~both])
    n = m.sum()
    right = (web.arrows[m] == RIGHT).sum()
    assert abs(right / n - 0.5) < 4 * 0.5 / np.sqrt(n)
    x, t = map(int, net.sites_with(BOTH)[0])
    assert (web.code(x, t) == RIGHT) == (signs[(x, t)] == 1)


def test_web_in_net_with_environment(seed):
    w = LatticeWindow(-200, 200, 0, 100)
    net = gen_net_field(w, 0.5, seed)
    env = gen_environment(w, MuSpec.delta(0.8), seed)
    web, _ = sample_web_in_net(net, env, seed)
    both = (net.arrows == BOTH) & w.mask()
    frac = (web.arrows[both] == RIGHT).mean()
    assert abs(frac - 0.8) < 4 * np.sqrt(0.16 / both.sum())


def test_switch_monotone_and_rate(seed):
    w = LatticeWindow(-300, 300, 0, 150)
    web = gen_web_field(w, seed)
    net = switch_web_to_net(web, 0.1, seed)
    m = w.mask()
    assert np.all((net.arrows[m] == web.arrows[m]) | (net.arrows[m] == BOTH))
    p = (net.arrows[m] == BOTH).mean()
    assert abs(p - 0.1) < 4 * np.sqrt(0.09 / m.sum())
    with pytest.raises(ValueError):
        switch_web_to_net(net, 0.1, seed)


def _relsep_brute(f, S, U):
    """Definition applied literally with Python loops."""
    w = f.window
    R = reachable(f, w.sites_at(S), S)
    out = set()

    def extremal(x, t, left):
        pos = [x]
        for s in range(t, U):
            c = f.code(x, s)
            step = (-1 if c & LEFT else 1) if left else (1 if c & RIGHT else -1)
            x += step
            if not w.x_min <= x <= w.x_max:
                return None
            pos.append(x)
        return pos

    for t in range(S + 1, U):
        for x in w.sites_at(t):
            x = int(x)
            if x - 1 < w.x_min or x + 1 > w.x_max:
                continue
            if not R[t - w.t_min, x - w.x_min] or f.code(x, t) != BOTH:
                continue
            if t + 1 > U:
                continue
            lp = extremal(x - 1, t + 1, True) if t + 1 < U else [x - 1]
            rp = extremal(x + 1, t + 1, False) if t + 1 < U else [x + 1]
            if lp is None or rp is None:
                continue
            if all(a < b for a, b in zip(lp, rp)):
                out.add((x, t))
    return out


def test_relevant_separation_brute_force(seed):
    w = LatticeWindow(-24, 24, 0, 10)
    for r in range(20):
        f = gen_net_field(w, 0.3, seed.replica(r))
        got = {tuple(map(int, p)) for p in relevant_separation_points(f, 0, 10)}
        assert got == _relsep_brute(f, 0, 10)


def test_relevant_separation_requires_branching(seed):
    f = gen_web_field(LatticeWindow(-20, 20, 0, 10), seed)
    assert relevant_separation_points(f, 0, 10).shape == (0, 2)


def test_finite_graph_small_survey():
    s = fingraph_survey(60, seed=8)
    assert s.violations == 0 and s.n_edges > 0


def test_finite_graph_single(seed):
    w = LatticeWindow(-20, 20, 0, 8)
    f = gen_net_field(w, 0.3, seed)
    g = finite_graph(f, 0, 8, bottom=[-4, -2, 0, 2, 4])
    assert check_finite_graph(f, g) == []
    assert all(v[1] == 8 for v in g.top)


def _prefixes(f, x, H):
    """All in-window arrow paths from (x, t_min) of length up to H."""
    w = f.window
    out, stack = [], [(x,)]
    while stack:
        p = stack.pop()
        out.append(p)
        t = w.t_min + len(p) - 1
        if t == w.t_min + H:
            continue
        c = f.code(p[-1], t)
        for bit, d in ((LEFT, -1), (RIGHT, 1)):
            if c & bit and w.x_min <= p[-1] + d <= w.x_max:
                stack.append(p + (p[-1] + d,))
    return out


def _pmrca_brute(f, H):
    w = f.window
    by_len = {}
    for x in w.sites_at(w.t_min):
        for p in _prefixes(f, int(x), H):
            by_len.setdefault(len(p), []).append(np.array(p))
    out = set()
    for n, ps in by_len.items():
        if n < 2:
            continue
        ends = {}
        for p in ps:
            ends.setdefault(p[-1], []).append(p)
        for y, group in ends.items():
            found = any(np.all(a[:-1] < b[:-1]) for a in group for b in group)
            if found:
                out.add((int(y), w.t_min + n - 1))
    return out


def test_pmrca_web_is_coalescence(seed):
    w = LatticeWindow(-30, 30, 0, 12)
    f = gen_web_field(w, seed)
    R = reachable(f, w.sites_at(0), 0)
    got = {tuple(map(int, p)) for p in pmrca_census(f)}
    want = set()
    for t in range(1, 13):
        for y in w.sites_at(t):
            j, i = int(y) - w.x_min, t - w.t_min
            if 0 < j < w.nx - 1 and R[i - 1, j - 1] and R[i - 1, j + 1] \
                    and f.arrows[i - 1, j - 1] & RIGHT and f.arrows[i - 1, j + 1] & LEFT:
                want.add((int(y), t))
    assert got == want


def test_pmrca_net_brute_force(seed):
    w = LatticeWindow(-7, 7, 0, 5)
    for r in range(30):
        f = gen_net_field(w, 0.3, seed.replica(r))
        got = {tuple(map(int, p)) for p in pmrca_census(f)}
        want = {z for z in _pmrca_brute(f, 5) if 0 < z[0] - w.x_min < w.nx - 1}
        assert got == want
