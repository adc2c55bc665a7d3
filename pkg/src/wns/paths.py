"""Path tracing, point sets, meeting statistics and density estimators.

Two evaluation routes are provided.  Materialized fields (``ArrowField``) are
used for exact, exhaustive work on bounded windows.  The Monte Carlo density
estimators instead run a particle system whose arrows are read lazily from the
site hash, so only occupied sites ever cost anything.  Both routes see the same
arrows for the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special

from .lattice import BOTH, LEFT, NONE, RIGHT, ArrowField, lazy_code, thresholds
from .rng import TAG_ARROWS, TAG_JITTER, TAG_POLICY, TAG_SIGN, SeedSpec, as_seed, replica_keys, site_uniform
from .stats import EstimateCI, KSResult, ks_test, mean_ci


# ---------------------------------------------------------------------------
# Closed forms

def web_density_target(t: float) -> float:
    return 1.0 / math.sqrt(math.pi * t)


def psi(t: float) -> float:
    """Density of the branching-coalescing point set started from everywhere."""
    if t == math.inf:
        return 2.0
    return math.exp(-t) / math.sqrt(math.pi * t) + 2.0 * float(special.ndtr(math.sqrt(2.0 * t)))


net_density_target = psi


def relsep_density_target(t: float, S: float = 0.0, U: float = 1.0) -> float:
    return 2.0 * psi(t - S) * psi(U - t)


def net_steps(t: float, eps: float) -> int:
    # guard against t/eps**2 landing a hair above an integer
    return int(math.ceil(t / eps**2 - 1e-9))


def web_steps(t: float, scale: float) -> int:
    return int(round(t * scale * scale))


# ---------------------------------------------------------------------------
# Paths and policies

@dataclass(frozen=True)
class PointSet:
    time: int
    positions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.int64)
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", p)

    def __len__(self):
        return int(self.positions.size)

    def __contains__(self, x):
        i = np.searchsorted(self.positions, x)
        return bool(i < self.positions.size and self.positions[i] == x)

    def issubset(self, other: "PointSet") -> bool:
        return self.time == other.time and bool(np.all(np.isin(self.positions, other.positions)))


@dataclass(frozen=True, eq=False)
class TracePolicy:
    """What a traced path does at a site carrying both arrows."""

    kind: str = "leftmost"
    seed: SeedSpec | None = None
    signs: object = None

    @classmethod
    def leftmost(cls):
        return cls("leftmost")

    @classmethod
    def rightmost(cls):
        return cls("rightmost")

    @classmethod
    def uniform(cls, seed):
        # the coin is a function of the site, so paths meeting at a site stay together
        return cls("uniform", as_seed(seed))

    @classmethod
    def sign_driven(cls, signs):
        return cls("sign", signs=signs)

    def choose(self, x: int, t: int) -> int:
        if self.kind == "leftmost":
            return -1
        if self.kind == "rightmost":
            return 1
        if self.kind == "uniform":
            return -1 if site_uniform(self.seed.key(TAG_POLICY), x, t, 0) < 0.5 else 1
        if self.kind == "sign":
            try:
                s = self.signs[(x, t)]
            except KeyError:
                raise KeyError(f"no sign for both-site {(x, t)}") from None
            return 1 if s > 0 else -1
        raise ValueError(f"unknown policy {self.kind!r}")


@dataclass(frozen=True, eq=False)
class LatticePath:
    start: tuple
    steps: np.ndarray
    terminated_by: str
    backward: bool = False

    def __len__(self):
        return int(self.steps.size)

    def positions(self) -> np.ndarray:
        return self.start[0] + np.concatenate([[0], np.cumsum(self.steps)]).astype(np.int64)

    def times(self) -> np.ndarray:
        d = -1 if self.backward else 1
        return self.start[1] + d * np.arange(self.steps.size + 1)

    @property
    def end(self):
        return int(self.positions()[-1]), int(self.times()[-1])

    def at(self, t: int) -> int:
        i = (self.start[1] - t) if self.backward else (t - self.start[1])
        if not 0 <= i <= self.steps.size:
            raise KeyError(t)
        return int(self.positions()[i])


def _step_dir(code, policy, x, t):
    if code == LEFT:
        return -1
    if code == RIGHT:
        return 1
    return policy.choose(x, t)


def trace_path(f: ArrowField, start, policy: TracePolicy | None = None, horizon: int | None = None) -> LatticePath:
    """Follow arrows from ``start``; dual fields are traced backward in time."""
    policy = policy or TracePolicy.leftmost()
    x, t = int(start[0]), int(start[1])
    w = f.window
    if not w.is_site(x, t):
        raise ValueError(f"start {start} is not a site of the window")
    if horizon is not None and horizon < 0:
        raise ValueError("horizon must be non-negative")
    back = f.dual
    room = (t - w.t_min) if back else (w.t_max - t)
    hz = room if horizon is None else min(horizon, room)
    steps = []
    why = "horizon" if horizon is not None and horizon <= room else "boundary"
    for _ in range(hz):
        c = f.arrows[t - w.t_min, x - w.x_min]
        if c == NONE:
            why = "killed"
            break
        d = _step_dir(c, policy, x, t)
        y = x + d
        if y < w.x_min or y > w.x_max:
            why = "boundary"
            break
        steps.append(d)
        x = y
        t = t - 1 if back else t + 1
    return LatticePath((int(start[0]), int(start[1])), np.array(steps, dtype=np.int8), why, back)


@njit(cache=True)
def reach_matrix(arrows, row0, occ0):
    """Sites reachable by arrow following from the occupied sites of ``row0``."""
    nt, nx = arrows.shape
    R = np.zeros((nt, nx), np.bool_)
    for j in range(nx):
        R[row0, j] = occ0[j]
    for i in range(row0, nt - 1):
        for j in range(nx):
            if R[i, j]:
                c = arrows[i, j]
                if (c & 1) and j > 0:
                    R[i + 1, j - 1] = True
                if (c & 2) and j < nx - 1:
                    R[i + 1, j + 1] = True
    return R


def _start_row(f: ArrowField, A, t0):
    w = f.window
    t0 = w.t_min if t0 is None else t0
    A = np.unique(np.asarray(list(A), dtype=np.int64))
    for x in A:
        if not w.is_site(int(x), t0):
            raise ValueError(f"start ({x}, {t0}) is not a site of the window")
    occ = np.zeros(w.nx, np.bool_)
    occ[A - w.x_min] = True
    return t0, occ


def reachable(f: ArrowField, A, t0: int | None = None) -> np.ndarray:
    if f.dual:
        raise ValueError("reachability is defined for forward fields")
    t0, occ = _start_row(f, A, t0)
    return reach_matrix(f.arrows, t0 - f.window.t_min, occ)


def point_set(f: ArrowField, A, t: int, t0: int | None = None) -> PointSet:
    """Sites at time ``t0 + t`` reachable from ``A x {t0}`` (all branches followed)."""
    w = f.window
    t0 = w.t_min if t0 is None else t0
    if t < 0 or t0 + t > w.t_max:
        raise ValueError("t beyond window")
    R = reachable(f, A, t0)
    return PointSet(t0 + t, np.flatnonzero(R[t0 + t - w.t_min]) + w.x_min)


@dataclass(frozen=True)
class MeetingTime:
    tau: int | None
    censored: bool


def meeting_time(f: ArrowField, x1, x2, horizon: int) -> MeetingTime:
    """First step at which the traced paths from two same-time sites coincide."""
    (a, s1), (b, s2) = x1, x2
    if s1 != s2:
        raise ValueError("paths must start at the same time")
    if f.kind != "web" or f.dual:
        raise ValueError("meeting_time needs a forward web field")
    if a == b:
        return MeetingTime(0, False)
    pa = trace_path(f, x1, None, horizon).positions()
    pb = trace_path(f, x2, None, horizon).positions()
    n = min(pa.size, pb.size)
    hit = np.flatnonzero(pa[:n] == pb[:n])
    if hit.size:
        return MeetingTime(int(hit[0]), False)
    return MeetingTime(None, True)


@dataclass(frozen=True, eq=False)
class MeetingPoints:
    sites: np.ndarray
    final: PointSet
    losses: int

    def __len__(self):
        return int(self.sites.shape[0])


def meeting_points(f: ArrowField, A, horizon: int, policy: TracePolicy | None = None,
                   t0: int | None = None) -> MeetingPoints:
    """First coincidences of traced paths from ``A x {t0}``.

    On net fields each path follows ``policy`` at both-sites; since policies are
    functions of the site, paths that meet continue together.
    """
    if f.dual:
        raise ValueError("meeting points are traced on forward fields")
    A = list(A)
    if not A:
        raise ValueError("empty start set")
    policy = policy or TracePolicy.leftmost()
    w = f.window
    t0 = w.t_min if t0 is None else t0
    t0, occ = _start_row(f, A, t0)
    pos = np.flatnonzero(occ) + w.x_min
    hz = min(horizon, w.t_max - t0)
    sites, losses = [], 0
    for s in range(t0, t0 + hz):
        nxt = []
        for x in pos:
            c = f.arrows[s - w.t_min, x - w.x_min]
            if c == NONE:
                losses += 1
                continue
            y = x + _step_dir(c, policy, int(x), s)
            if y < w.x_min or y > w.x_max:
                losses += 1
                continue
            if nxt and nxt[-1] == y:
                sites.append((y, s + 1))
            else:
                nxt.append(y)
        pos = np.array(nxt, dtype=np.int64)
    arr = np.array(sites, dtype=np.int64).reshape(-1, 2)
    return MeetingPoints(arr, PointSet(t0 + hz, pos), losses)


# ---------------------------------------------------------------------------
# Lazily evaluated branching-coalescing particle system

@njit(cache=True)
def _bcrw_run(key, half, n_steps, a1, a2, a3, m_lo, m_hi, ck_steps, sign_key, resolve):
    """Start from every even site of [-half, half]; count occupied sites of
    [m_lo, m_hi) at each checkpoint and return the final configuration.

    With ``resolve`` each both-site is replaced by one arrow from a fair sign
    drawn under ``sign_key``: a web sampled inside the net."""
    cap = half + 4
    pos = np.empty(cap, np.int64)
    nxt = np.empty(cap, np.int64)
    n = 0
    for x in range(-half, half + 1, 2):
        pos[n] = x
        n += 1
    lim = half + 1
    nck = ck_steps.shape[0]
    counts = np.zeros(nck, np.int64)
    ci = 0
    while ci < nck and ck_steps[ci] == 0:
        for i in range(n):
            if m_lo <= pos[i] < m_hi:
                counts[ci] += 1
        ci += 1
    for t in range(n_steps):
        m = 0
        for i in range(n):
            x = pos[i]
            c = lazy_code(key, x, t, a1, a2, a3)
            if resolve and c == BOTH:
                c = RIGHT if site_uniform(sign_key, x, t, 0) < 0.5 else LEFT
            if c & 1:
                y = x - 1
                if y >= -lim and (m == 0 or nxt[m - 1] != y):
                    nxt[m] = y
                    m += 1
            if c & 2:
                y = x + 1
                if y <= lim and (m == 0 or nxt[m - 1] != y):
                    nxt[m] = y
                    m += 1
        pos, nxt = nxt, pos
        n = m
        while ci < nck and ck_steps[ci] == t + 1:
            for i in range(n):
                if m_lo <= pos[i] < m_hi:
                    counts[ci] += 1
            ci += 1
    return counts, pos[:n].copy()


@njit(cache=True)
def _meeting_times(keys, gap, horizon):
    out = np.empty(keys.shape[0], np.int64)
    for r in range(keys.shape[0]):
        key = keys[r]
        a = 0
        b = gap
        tau = -1
        for t in range(horizon):
            a += 1 if site_uniform(key, a, t, 0) >= 0.5 else -1
            b += 1 if site_uniform(key, b, t, 0) >= 0.5 else -1
            if a == b:
                tau = t + 1
                break
        out[r] = tau
    return out


def meeting_time_samples(reps: int, horizon: int, seed, gap: int = 2) -> np.ndarray:
    """Meeting times of web paths started ``gap`` apart; -1 marks censoring."""
    if gap <= 0 or gap % 2:
        raise ValueError("gap must be a positive even integer")
    seed = as_seed(seed)
    keys = replica_keys(seed.master_seed, reps, TAG_ARROWS)
    return _meeting_times(keys, gap, horizon)


def survival_curve(taus: np.ndarray, ns) -> np.ndarray:
    """Empirical P(tau > n); censored samples (-1) count as survivors."""
    t = np.where(taus < 0, np.iinfo(np.int64).max, taus)
    return np.array([np.mean(t > n) for n in ns])


@dataclass(frozen=True)
class DensityEstimate:
    kind: str
    t: float
    eps: float
    scale: float
    n_steps: int
    estimate: EstimateCI
    target: float
    reps: int
    seed: int

    @property
    def rel_err(self) -> float:
        return self.estimate.rel_err(self.target)

    def row(self) -> dict:
        e = self.estimate
        return {"t": self.t, "estimate": e.mean, "ci_lo": e.ci_lo, "ci_hi": e.ci_hi,
                "reps": self.reps, "eps": self.eps, "seed": self.seed}


def _layout(kind, eps, scale, n_max, width):
    unit = scale if kind == "web" else 1.0 / eps  # lattice units per continuum unit
    margin = 4.0 * math.sqrt(n_max) + (eps * n_max if kind == "net" else 0.0)
    m_half = max(2, int(round(0.5 * width * unit)))
    m_half += m_half % 2
    half = m_half + int(math.ceil(margin))
    half += half % 2
    return unit, m_half, half


def density_samples(kind: str, ts, reps: int, seed, eps: float = 0.0, scale: float = 200,
                    width: float = 20.0, first_replica: int = 0) -> np.ndarray:
    """Per-replica densities, shape (reps, len(ts)); replica i uses key index first_replica + i."""
    if kind not in ("web", "net", "web_in_net"):
        raise ValueError("kind must be 'web', 'net' or 'web_in_net'")
    resolve = kind == "web_in_net"
    if resolve:
        # a net with branching eps whose both-sites get fair signs; scales like a web
        if not 0 <= eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        kind = "web"
    ts = [float(t) for t in np.atleast_1d(ts)]
    if any(t <= 0 for t in ts):
        raise ValueError("t must be positive")
    if kind == "net" and not 0 < eps <= 1:
        raise ValueError("net density needs 0 < eps <= 1")
    seed = as_seed(seed)
    steps = [web_steps(t, scale) if kind == "web" else net_steps(t, eps) for t in ts]
    n_max = max(steps)
    unit, m_half, half = _layout(kind, eps, scale, n_max, width)
    a = thresholds("net", eps=eps) if (resolve or kind == "net") else thresholds("web")
    order = np.argsort(steps, kind="stable")
    ck = np.array([steps[i] for i in order], dtype=np.int64)
    keys = replica_keys(seed.master_seed, reps, TAG_ARROWS, first_replica)
    skeys = replica_keys(seed.master_seed, reps, TAG_SIGN, first_replica)
    counts = np.empty((reps, len(ts)))
    for r in range(reps):
        c, _ = _bcrw_run(keys[r], half, n_max, *a, -m_half, m_half, ck, skeys[r], resolve)
        counts[r, order] = c
    return counts / (2 * m_half) * unit


def density_from_samples(kind: str, ts, dens: np.ndarray, seed, eps: float = 0.0,
                         scale: float = 200) -> list:
    seed = as_seed(seed)
    out = []
    for i, t in enumerate(float(t) for t in np.atleast_1d(ts)):
        web = kind != "net"
        target = web_density_target(t) if web else net_density_target(t)
        steps = web_steps(t, scale) if web else net_steps(t, eps)
        out.append(DensityEstimate(kind, t, 0.0 if kind == "web" else eps,
                                   scale if web else 1.0 / eps, steps,
                                   mean_ci(dens[:, i]), target, dens.shape[0], seed.master_seed))
    return out


def density_curve(kind: str, ts, reps: int, seed, eps: float = 0.0, scale: float = 200,
                  width: float = 20.0, first_replica: int = 0) -> list:
    """Density per unit continuum length of the point set started from everywhere.

    All times share the same replicas; returns one DensityEstimate per time.
    """
    if reps < 2:
        raise ValueError("need at least 2 replicas")
    dens = density_samples(kind, ts, reps, seed, eps, scale, width, first_replica)
    return density_from_samples(kind, ts, dens, seed, eps, scale)


def density_estimate(kind: str, t: float, reps: int, seed, eps: float = 0.0,
                     scale: float = 200, width: float = 20.0) -> DensityEstimate:
    return density_curve(kind, [t], reps, seed, eps=eps, scale=scale, width=width)[0]


# ---------------------------------------------------------------------------
# Backbone

@dataclass(frozen=True)
class BackboneReport:
    eps: float
    burn_in: float
    density: EstimateCI
    density_half: EstimateCI
    plateau: bool
    ks: KSResult
    gap_rate: float
    n_gaps: int
    reps: int
    seed: int

    def to_dict(self):
        return {"eps": self.eps, "burn_in": self.burn_in, "density": self.density.to_dict(),
                "density_half": self.density_half.to_dict(), "plateau": self.plateau,
                "ks_statistic": self.ks.statistic, "ks_pvalue": self.ks.pvalue,
                "gap_rate": self.gap_rate, "n_gaps": self.n_gaps, "reps": self.reps,
                "seed": self.seed}


class PlateauError(RuntimeError):
    pass


def backbone_density(eps: float, burn_in: float, width: float, reps: int, seed,
                     require_plateau: bool = True) -> BackboneReport:
    """Density and gap law of the branching-coalescing point set after a long run.

    Gaps are measured in units of the sublattice spacing; each integer gap g is
    smoothed to ``g - 1 + U`` (U uniform) before the KS test so that the
    geometric lattice law is compared with its exponential limit.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    seed = as_seed(seed)
    n = net_steps(burn_in, eps)
    unit, m_half, half = _layout("net", eps, 1.0, n, width)
    a = thresholds("net", eps=eps)
    ck = np.array([n // 2, n], dtype=np.int64)
    keys = replica_keys(seed.master_seed, reps, TAG_ARROWS)
    jkeys = replica_keys(seed.master_seed, reps, TAG_JITTER)
    counts = np.empty((reps, 2))
    gaps = []
    for r in range(reps):
        c, pos = _bcrw_run(keys[r], half, n, *a, -m_half, m_half, ck, np.uint64(0), False)
        counts[r] = c
        p = pos[(pos >= -m_half) & (pos < m_half)]
        g = np.diff(p) // 2
        u = np.array([site_uniform(jkeys[r], int(x), n, 0) for x in p[1:]])
        gaps.append((g - 1 + u) * 2 * eps)
    dens = counts / (2 * m_half) * unit
    d_half, d_full = mean_ci(dens[:, 0]), mean_ci(dens[:, 1])
    plateau = not (d_half.ci_hi < d_full.ci_lo or d_full.ci_hi < d_half.ci_lo)
    if require_plateau and not plateau:
        raise PlateauError(f"density still moving: {d_half.mean:.4f} -> {d_full.mean:.4f}")
    g = np.concatenate(gaps)
    rate = 1.0 / g.mean()
    ks = ks_test(g, lambda x: -np.expm1(-rate * x))
    return BackboneReport(eps, burn_in, d_full, d_half, plateau, ks, float(rate), int(g.size),
                          reps, seed.master_seed)
