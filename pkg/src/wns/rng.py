"""Counter-based random streams.

Every random quantity in the package is a pure function of
``(master_seed, stream_id, tag, x, t, k)``: a site of the space-time lattice
is hashed together with the replica key, so a field can be materialized on a
window or queried lazily one site at a time and both routes agree bit for bit.
Parallel replicas and the order in which sites are visited therefore never
change results.

The mixer is the splitmix64 finalizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_GOLDEN = 0x9E3779B97F4A7C15
_C_X = 0xD1B54A32D192ED03
_C_T = 0xAEF17502108EF2D9
_C_K = 0xF1357AEA2E62A9C5
_MASK = (1 << 64) - 1

# Stream tags; each kind of draw gets its own.
TAG_ARROWS = 1
TAG_OMEGA = 2
TAG_ENV_WEB = 3
TAG_SWITCH = 4
TAG_SIGN = 5
TAG_POLICY = 6
TAG_JITTER = 7
TAG_WALKER = 8
TAG_TSAW = 9
TAG_GAUSS = 10


def _mix_py(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedSpec:
    """Replica seed: a master seed plus the replica (stream) index."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must be a non-negative 64-bit integer")

    def key(self, tag: int) -> np.uint64:
        return stream_key(self.master_seed, self.stream_id, tag)

    def replica(self, i: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, i)


def as_seed(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed), 0)


def stream_key(master_seed: int, stream_id: int, tag: int) -> np.uint64:
    h = _mix_py(master_seed + _GOLDEN)
    h = _mix_py(h ^ ((stream_id * _C_X) & _MASK))
    h = _mix_py(h ^ ((tag * _C_T) & _MASK))
    return np.uint64(h)


def replica_keys(master_seed: int, reps: int, tag: int, first: int = 0) -> np.ndarray:
    return np.array(
        [stream_key(master_seed, first + r, tag) for r in range(reps)], dtype=np.uint64
    )


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def site_bits(key, x, t, k):
    h = mix64(key ^ (np.uint64(np.int64(x)) * np.uint64(_C_X)))
    h = mix64(h ^ (np.uint64(np.int64(t)) * np.uint64(_C_T)))
    return mix64(h ^ (np.uint64(np.int64(k)) * np.uint64(_C_K)))


@njit(cache=True, inline="always")
def site_uniform(key, x, t, k):
    """Uniform on [0, 1) with 53 random bits."""
    return np.float64(site_bits(key, x, t, k) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def site_uniform_open(key, x, t, k):
    """Uniform on (0, 1), safe for logarithms."""
    return (np.float64(site_bits(key, x, t, k) >> np.uint64(11)) + 0.5) * (
        1.0 / 9007199254740992.0
    )


@njit(cache=True, inline="always")
def sub_key(key, i):
    return mix64(key ^ (np.uint64(np.int64(i)) * np.uint64(_GOLDEN)))


@njit(cache=True)
def site_uniform_grid(key, xs, t, k):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = site_uniform(key, xs[i], t, k)
    return out


@njit(cache=True, inline="always")
def site_normal(key, x, t, k):
    # Box-Muller on two independent counters.
    u1 = site_uniform_open(key, x, t, 2 * k)
    u2 = site_uniform(key, x, t, 2 * k + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
