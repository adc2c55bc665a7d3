import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wns.lattice import (BOTH, LEFT, NONE, RIGHT, ArrowField, LatticeWindow, dual_field,
                         from_bytes, from_json, gen_environment, gen_kill_field, gen_net_field,
                         gen_web_field, lazy_code, load, mirror_codes, rotate_dual, save,
                         thresholds, to_bytes, to_json)
from wns.mu import MuSpec
from wns.paths import TracePolicy, trace_path
from wns.rng import TAG_ARROWS, SeedSpec


def test_window_geometry():
    w = LatticeWindow(-3, 3, 0, 2)
    assert w.shape == (3, 7)
    assert list(w.sites_at(0)) == [-2, 0, 2]
    assert list(w.sites_at(1)) == [-3, -1, 1, 3]
    assert w.is_site(1, 1) and not w.is_site(0, 1)
    assert w.n_sites() == 3 + 4 + 3
    with pytest.raises(ValueError):
        LatticeWindow(0, 0, 0, 1)


def test_web_field_codes(window, seed):
    f = gen_web_field(window, seed)
    v = f.arrows[window.mask()]
    assert set(np.unique(v)) <= {LEFT, RIGHT}
    assert np.all(f.arrows[~window.mask()] == NONE)


def test_net_eps_zero_equals_web(window, seed):
    assert gen_net_field(window, 0.0, seed) == gen_web_field(window, seed)


def test_lazy_matches_materialized(window, seed):
    f = gen_net_field(window, 0.25, seed)
    key = seed.key(TAG_ARROWS)
    a1, a2, a3 = thresholds("net", 0.25)
    for x, t in [(0, 0), (-3, 5), (7, 9), (20, 16)]:
        assert f.code(x, t) == lazy_code(key, x, t, a1, a2, a3)


def test_windows_agree_on_overlap(seed):
    big = gen_net_field(LatticeWindow(-30, 30, -5, 20), 0.2, seed)
    small = gen_net_field(LatticeWindow(-4, 6, 3, 9), 0.2, seed)
    for t in range(3, 10):
        for x in small.window.sites_at(t):
            assert small.code(int(x), t) == big.code(int(x), t)


def test_net_frequencies(seed):
    w = LatticeWindow(-400, 400, 0, 200)
    f = gen_net_field(w, 0.2, seed)
    c = f.counts()
    n = sum(c.values())
    p_both = c["both"] / n
    assert abs(p_both - 0.2) < 4 * np.sqrt(0.2 * 0.8 / n)
    assert abs(c["left"] - c["right"]) < 4 * np.sqrt(n)


def test_kill_field_frequencies(seed):
    w = LatticeWindow(-300, 300, 0, 100)
    f = gen_kill_field(w, 0.1, 0.05, seed)
    c = f.counts()
    n = sum(c.values())
    assert abs(c["none"] / n - 0.05) < 4 * np.sqrt(0.05 / n)
    with pytest.raises(ValueError):
        thresholds("kill", b=0.7, kappa=0.5)


def test_mirror_is_involution():
    a = np.array([NONE, LEFT, RIGHT, BOTH], np.uint8)
    assert list(mirror_codes(a)) == [NONE, RIGHT, LEFT, BOTH]
    assert np.array_equal(mirror_codes(mirror_codes(a)), a)


def _fwd_paths(f, x, U):
    from wns.coupling import _arrow_paths
    return [np.array(p) for p in _arrow_paths(f.arrows, f.window, int(x), f.window.t_min, U)]


def _dual_path(d, x, s, policy):
    p = trace_path(d, (int(x), s), policy)
    return dict(zip(p.times().tolist(), p.positions().tolist()))


def _sign_changes(fwd, t0, dual):
    """Signs of (forward - dual) over common times, in increasing time."""
    out = []
    for k, x in enumerate(fwd):
        t = t0 + k
        if t in dual:
            out.append(np.sign(x - dual[t]))
    return out


def test_mirror_rule_single_cell():
    w = LatticeWindow(-2, 2, 0, 1)
    arr = np.zeros(w.shape, np.uint8)
    arr[0, 2] = RIGHT  # (0, 0) -> (1, 1)
    d = dual_field(ArrowField(w, arr))
    assert d.code(0, 1) == LEFT  # (0, 1) -> (-1, 0)


def test_web_dual_never_crosses(seed):
    w = LatticeWindow(-10, 10, 0, 8)
    for r in range(5):
        f = gen_web_field(w, seed.replica(r))
        d = dual_field(f)
        for x in w.sites_at(0):
            if abs(x) > 2:
                continue
            (fp,) = _fwd_paths(f, x, 8)
            for y in d.window.sites_at(9):
                if abs(y) > 9:
                    continue
                dp = _dual_path(d, y, 9, TracePolicy.leftmost())
                sg = _sign_changes(fp, 0, dp)
                assert all(s == sg[0] for s in sg)


def test_net_dual_one_directional_crossing(seed):
    w = LatticeWindow(-10, 10, 0, 7)
    for r in range(5):
        f = gen_net_field(w, 0.3, seed.replica(r))
        d = dual_field(f)
        for x in (-2, 0, 2):
            for fp in _fwd_paths(f, x, 7):
                for y in d.window.sites_at(8):
                    if abs(y) > 8:
                        continue
                    sl = _sign_changes(fp, 0, _dual_path(d, y, 8, TracePolicy.leftmost()))
                    sr = _sign_changes(fp, 0, _dual_path(d, y, 8, TracePolicy.rightmost()))
                    # read in the dual's (backward) time: a dual leftmost path is
                    # never crossed from right to left, a rightmost one never from
                    # left to right; in forward time the inequalities flip
                    assert not any(a < 0 < b for a, b in zip(sl, sl[1:]))
                    assert not any(a > 0 > b for a, b in zip(sr, sr[1:]))


def test_dual_both_fraction(seed):
    w = LatticeWindow(-300, 300, 0, 150)
    d = dual_field(gen_net_field(w, 0.05, seed))
    c = d.counts()
    n = sum(c.values())
    assert abs(c["both"] / n - 0.05) < 3 * np.sqrt(0.05 * 0.95 / n)


def test_rotate_dual_is_forward(window, seed):
    d = dual_field(gen_net_field(window, 0.3, seed))
    r = rotate_dual(d)
    assert not r.dual and r.window.parity == 0
    assert np.all(r.arrows[~r.window.mask()] == NONE)
    assert r.counts() == d.counts() or sum(r.counts().values()) == sum(d.counts().values())


def test_environment(window, seed):
    env = gen_environment(window, MuSpec.uniform(), seed)
    v = env.omega[window.mask()]
    assert np.all((v >= 0) & (v <= 1))
    assert env.at(0, 0) == env.omega[0, 20]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 1), st.integers(1, 12), st.integers(1, 12))
def test_serialization_roundtrip(s, eps, hx, ht):
    w = LatticeWindow(-hx, hx, -1, ht)
    f = gen_net_field(w, eps, SeedSpec(s, 3))
    for g in (from_bytes(to_bytes(f)), from_json(to_json(f))):
        assert g == f and g.kind == f.kind and g.seed == f.seed
    d = dual_field(f)
    g = from_bytes(to_bytes(d))
    assert g.dual and g == d


def test_environment_roundtrip(tmp_path, window, seed):
    env = gen_environment(window, MuSpec.beta(2.0, 2.0), seed)
    p = tmp_path / "env.bin"
    save(env, p)
    e2 = load(p)
    assert np.array_equal(e2.omega, env.omega)
    assert np.array_equal(from_json(to_json(env)).omega, env.omega)


def test_bad_arrays_rejected(window):
    with pytest.raises(ValueError):
        ArrowField(window, np.zeros((2, 2), np.uint8))
