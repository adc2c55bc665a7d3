import numpy as np
from hypothesis import given, settings, strategies as st

from wns.rng import (TAG_ARROWS, TAG_SIGN, SeedSpec, as_seed, replica_keys, site_normal,
                     site_uniform, site_uniform_grid, site_uniform_open, stream_key)


def test_stream_key_deterministic_and_distinct():
    a = stream_key(1, 0, TAG_ARROWS)
    assert a == stream_key(1, 0, TAG_ARROWS)
    assert len({stream_key(1, 0, TAG_ARROWS), stream_key(1, 1, TAG_ARROWS),
                stream_key(2, 0, TAG_ARROWS), stream_key(1, 0, TAG_SIGN)}) == 4


def test_replica_keys_match_stream_keys():
    ks = replica_keys(9, 5, TAG_ARROWS, first=3)
    assert ks.dtype == np.uint64
    assert [int(k) for k in ks] == [int(stream_key(9, 3 + r, TAG_ARROWS)) for r in range(5)]


def test_seedspec_validation():
    assert as_seed(4) == SeedSpec(4, 0)
    assert SeedSpec(4).replica(7) == SeedSpec(4, 7)
    for bad in (-1, 2**64):
        try:
            SeedSpec(bad)
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")


@settings(max_examples=50, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6), st.integers(0, 10))
def test_uniform_range_and_purity(x, t, k):
    key = stream_key(3, 0, TAG_ARROWS)
    u = site_uniform(key, x, t, k)
    assert 0.0 <= u < 1.0
    assert u == site_uniform(key, x, t, k)
    assert 0.0 < site_uniform_open(key, x, t, k) < 1.0


def test_grid_matches_pointwise():
    key = stream_key(5, 2, TAG_ARROWS)
    xs = np.arange(-50, 50, 2, dtype=np.int64)
    g = site_uniform_grid(key, xs, 7, 0)
    assert np.array_equal(g, [site_uniform(key, int(x), 7, 0) for x in xs])


def test_uniform_and_normal_moments():
    key = stream_key(11, 0, TAG_ARROWS)
    xs = np.arange(200000, dtype=np.int64)
    u = site_uniform_grid(key, xs, 0, 0)
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)
    z = np.array([site_normal(key, int(x), 1, 0) for x in xs[:20000]])
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.05
