"""True self-avoiding walk with bond repulsion.

Edge {e, e+1} is indexed by its left endpoint e.  At x the walk compares the
local times of edges x-1 and x, steps across the strictly less visited one and
tosses a fair coin on ties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import TAG_TSAW, as_seed, replica_keys, site_uniform
from .stats import EstimateCI, SlopeFit, binomial_ci, loglog_slope

__all__ = ["TsawState", "TsawRun", "default_l0", "run_tsaw", "run_srw", "profile_check",
           "ProfileReport", "ScalingReport", "scaling_exponent"]


def default_l0(half_width: int) -> np.ndarray:
    """Alternating initial local times on edges -half_width .. half_width-1.

    l0 = 1 on {2x, 2x+1} for x >= 0, 0 on {2x-1, 2x}, mirrored through 0, so
    both edges at the origin carry 1.  Index i holds edge e = i - half_width.
    """
    if half_width < 1:
        raise ValueError("half_width must be at least 1")
    e = np.arange(-half_width, half_width)
    return np.where(e >= 0, (e % 2 == 0), (e % 2 == 1)).astype(np.int64)


@dataclass(eq=False)
class TsawState:
    position: int
    n: int
    local_times: np.ndarray  # index i <-> edge e = i - offset
    l0: np.ndarray
    offset: int

    def l(self, e: int) -> int:
        return int(self.local_times[e + self.offset])

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.local_times.size) - self.offset

    def area(self) -> int:
        return int(np.sum(self.local_times - self.l0))

    def check_area(self):
        if self.area() != self.n:
            raise AssertionError(f"area identity broken: {self.area()} != {self.n}")

    def profile_rows(self):
        for e, v in zip(self.edges, self.local_times):
            yield {"edge_left_endpoint": int(e), "local_time": int(v)}


@njit(cache=True)
def _tsaw(key, lt, off, x, n0, n_steps, record, checkpoints):
    traj = np.empty(n_steps + 1 if record else 1, np.int64)
    traj[0] = x
    absx = np.empty(checkpoints.shape[0], np.int64)
    ci = 0
    ties = 0
    tie_left = 0
    for s in range(n_steps):
        while ci < checkpoints.shape[0] and checkpoints[ci] == s:
            absx[ci] = abs(x)
            ci += 1
        i = x + off
        ll = lt[i - 1]
        lr = lt[i]
        if ll < lr:
            go_left = True
        elif lr < ll:
            go_left = False
        else:
            go_left = site_uniform(key, n0 + s, 0, 0) < 0.5
            ties += 1
            tie_left += go_left
        if go_left:
            lt[i - 1] += 1
            x -= 1
        else:
            lt[i] += 1
            x += 1
        if record:
            traj[s + 1] = x
    while ci < checkpoints.shape[0] and checkpoints[ci] == n_steps:
        absx[ci] = abs(x)
        ci += 1
    return x, traj, absx, ties, tie_left


@dataclass(eq=False)
class TsawRun:
    state: TsawState
    trajectory: np.ndarray | None
    ties: int
    tie_left: int

    def tie_balance(self) -> EstimateCI:
        return binomial_ci(self.tie_left, self.ties)

    def trajectory_rows(self):
        if self.trajectory is None:
            return
        for k, x in enumerate(self.trajectory):
            yield {"n": k, "x": int(x)}


def _key(seed):
    s = as_seed(seed)
    return s.key(TAG_TSAW)


def run_tsaw(n_steps: int, l0: np.ndarray | None = None, seed=0, record: bool = True,
             offset: int | None = None) -> TsawRun:
    """Run from the origin.  ``l0`` defaults to ``default_l0`` wide enough for n_steps."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if l0 is None:
        hw = n_steps + 2
        l0 = default_l0(hw)
        offset = hw
    else:
        l0 = np.asarray(l0, np.int64)
        if offset is None:
            offset = l0.size // 2
        if offset - 1 - n_steps < 0 or offset + n_steps >= l0.size:
            raise ValueError("l0 too short for n_steps")
    lt = l0.copy()
    x, traj, _, ties, tl = _tsaw(_key(seed), lt, offset, 0, 0, n_steps, record,
                                 np.zeros(0, np.int64))
    st = TsawState(int(x), n_steps, lt, l0, offset)
    st.check_area()
    return TsawRun(st, traj if record else None, int(ties), int(tl))


@dataclass(frozen=True)
class ProfileReport:
    area_ok: bool
    step_ok: bool
    bad_edges: list  # left edges e with |l(e+1) - l(e)| != 1 inside the checked range
    checked: tuple  # (lo, hi) range of edge pairs checked

    @property
    def ok(self) -> bool:
        return self.area_ok and self.step_ok


def profile_check(state: TsawState, window: tuple | None = None, visited: tuple | None = None,
                  skip_position: bool = True) -> ProfileReport:
    """Area identity and the +-1 step property of the local-time profile.

    Edge pairs (e, e+1) are checked for e+1 inside [min visited - 1, max visited + 1]
    (``visited`` defaults to the support of l - l0 widened to the position).
    The pair straddling the current position is the walker's own defect
    and is skipped unless ``skip_position`` is False.
    """
    area_ok = state.area() == state.n
    if visited is None:
        moved = np.flatnonzero(state.local_times != state.l0) - state.offset
        lo = min(int(moved.min()), state.position) if moved.size else state.position
        hi = max(int(moved.max()) + 1, state.position) if moved.size else state.position
    else:
        lo, hi = visited
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    bad = []
    # pairs (e, e+1) meet at vertex v = e + 1; check v in [lo - 1, hi + 1] strictly inside l's range
    v_lo = max(lo - 1, -state.offset + 1)
    v_hi = min(hi + 1, state.local_times.size - state.offset - 1)
    for v in range(v_lo, v_hi + 1):
        if skip_position and v == state.position:
            continue
        if abs(state.l(v) - state.l(v - 1)) != 1:
            bad.append(v - 1)
    return ProfileReport(area_ok, not bad, bad, (v_lo, v_hi))


@njit(cache=True)
def _srw(key, n_steps, checkpoints):
    x = 0
    absx = np.empty(checkpoints.shape[0], np.int64)
    ci = 0
    for s in range(n_steps + 1):
        while ci < checkpoints.shape[0] and checkpoints[ci] == s:
            absx[ci] = abs(x)
            ci += 1
        if s < n_steps:
            x += 1 if site_uniform(key, s, 0, 0) < 0.5 else -1
    return absx


def run_srw(n_steps: int, seed=0) -> int:
    ck = np.array([n_steps], np.int64)
    return int(_srw(_key(seed), n_steps, ck)[0]) * 1


@dataclass(frozen=True)
class ScalingReport:
    walk: str
    ns: np.ndarray
    mean_abs: np.ndarray
    fit: SlopeFit
    fit_half: SlopeFit  # same regression stopped at n_max / 2
    seeds: int

    @property
    def slope(self) -> float:
        return self.fit.slope

    def trend_toward(self, target: float = 2 / 3) -> bool:
        return abs(self.fit.slope - target) <= abs(self.fit_half.slope - target)

    def rows(self):
        for n, m in zip(self.ns, self.mean_abs):
            yield {"n": int(n), "mean_abs_x": float(m)}

    def to_dict(self) -> dict:
        return {"walk": self.walk, "slope": self.fit.slope, "stderr": self.fit.stderr,
                "slope_half": self.fit_half.slope, "stderr_half": self.fit_half.stderr,
                "seeds": self.seeds, "n_max": int(self.ns[-1])}


def scaling_exponent(n_max: int = 10**6, seeds: int = 200, seed=0, walk: str = "tsaw",
                     n_min: int = 2**10) -> ScalingReport:
    """Slope of log E|X_n| against log n over dyadic n in [n_min, n_max]."""
    if n_max < 10**4:
        raise ValueError("n_max must be at least 1e4")
    if seeds < 2:
        raise ValueError("need at least 2 seeds")
    k_lo = int(math.ceil(math.log2(n_min)))
    k_hi = int(math.floor(math.log2(n_max)))
    ns = 2 ** np.arange(k_lo, k_hi + 1)
    if ns[-1] != n_max:
        ns = np.append(ns, n_max)
    ns = ns.astype(np.int64)
    s = as_seed(seed)
    keys = replica_keys(s.master_seed, seeds, TAG_TSAW)
    absx = np.empty((seeds, ns.size))
    hw = n_max + 2
    l0 = default_l0(hw)
    for r in range(seeds):
        if walk == "tsaw":
            lt = l0.copy()
            _, _, a, _, _ = _tsaw(keys[r], lt, hw, 0, 0, n_max, False, ns)
        elif walk == "srw":
            a = _srw(keys[r], n_max, ns)
        else:
            raise ValueError(f"unknown walk {walk!r}")
        absx[r] = a
    m = absx.mean(axis=0)
    if np.any(m <= 0):
        raise ValueError("insufficient samples: zero mean displacement")
    fit = loglog_slope(ns, m)
    half = ns <= n_max // 2
    fit_half = loglog_slope(ns[half], m[half]) if half.sum() >= 3 else fit
    return ScalingReport(walk, ns, m, fit, fit_half, seeds)
