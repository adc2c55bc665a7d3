import numpy as np
import pytest

from wns.tsaw import default_l0, profile_check, run_srw, run_tsaw, scaling_exponent


def test_default_profile():
    assert list(default_l0(3)) == [1, 0, 1, 1, 0, 1]
    l0 = default_l0(50)
    assert np.all(np.abs(np.diff(l0)) <= 1)
    assert np.array_equal(l0, l0[::-1])  # mirror symmetric through the origin
    with pytest.raises(ValueError):
        default_l0(0)


@pytest.mark.parametrize("seed", range(5))
def test_area_identity_and_profile(seed):
    r = run_tsaw(5000, seed=seed)
    assert r.state.area() == 5000
    assert profile_check(r.state).ok
    traj = r.trajectory
    assert np.all(np.abs(np.diff(traj)) == 1)
    assert traj[-1] == r.state.position


def test_repulsion_is_strict():
    lt = np.array([0, 2, 1, 0], np.int64)  # edges -2..1: left edge 2, right edge 1
    r = run_tsaw(1, lt, offset=2)
    assert r.trajectory[1] == 1 and r.ties == 0


def test_ties_are_fair():
    ties = left = 0
    for s in range(40):
        r = run_tsaw(2000, seed=s, record=False)
        ties += r.ties
        left += r.tie_left
    assert abs(left / ties - 0.5) < 4 * 0.5 / np.sqrt(ties)


def test_local_time_walk_visits_each_edge_consistently():
    r = run_tsaw(3000, seed=9)
    traj = r.trajectory
    crossings = {}
    for a, b in zip(traj[:-1], traj[1:]):
        e = min(a, b)
        crossings[e] = crossings.get(e, 0) + 1
    for e, c in crossings.items():
        assert r.state.l(e) - r.state.l0[e + r.state.offset] == c


def test_short_l0_rejected():
    with pytest.raises(ValueError):
        run_tsaw(10, default_l0(3), offset=3)


def test_srw_reproducible():
    assert run_srw(1000, seed=3) == run_srw(1000, seed=3)


def test_scaling_small():
    t = scaling_exponent(2**14, seeds=200, seed=1)
    s = scaling_exponent(2**14, seeds=200, seed=1, walk="srw")
    assert 0.58 < t.slope < 0.76
    assert 0.42 < s.slope < 0.58
    assert t.slope > s.slope
