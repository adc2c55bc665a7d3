"""The left-right SDE and sticky n-point motions.

``solve_left_right`` builds the pair from one reflected Brownian motion and an
independent time-changed Brownian motion for the sum L + R:

    Z = B + sqrt(2) tau + D0/sqrt(2),   S = -min(0, inf Z),   Dt = Z + S,
    t(tau) = tau + S/sqrt(2),           D = sqrt(2) Dt,

and L + R runs on the clock 2 tau + 2 sqrt(2) S (quadratic-variation rate 2
while apart and 4 while together).  Everything is exact on the tau grid; only
the final resampling onto a uniform t grid interpolates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .lattice import thresholds
from .mu import FiniteMeasure, MuSpec, MuTable, beta_plus, mu_draw, mu_eps_net
from .rng import TAG_ARROWS, TAG_GAUSS, TAG_WALKER, as_seed, replica_keys, site_uniform, sub_key
from .stats import EstimateCI, KSResult, ks_2samp, mean_ci

__all__ = [
    "ContinuumPath", "LeftRight", "StickyRunReport", "solve_left_right", "sticky_pair",
    "lattice_left_right", "StickyEnsemble", "npoint_sticky", "CovariationReport",
    "check_covariation", "max_slope", "SlopeReport", "beta_plus",
]

SQ2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ContinuumPath:
    start: float
    dt: float
    x: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.x)):
            raise ValueError("path has non-finite entries")

    @property
    def times(self) -> np.ndarray:
        return self.start + self.dt * np.arange(self.x.size)

    @property
    def end(self) -> float:
        return self.start + self.dt * (self.x.size - 1)

    def at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.x))


def _grid_len(T, dt, start=0.0):
    return int(math.floor((T - start) / dt + 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class LeftRight:
    """One solution; unpacks as ``L, R``."""
    L: ContinuumPath
    R: ContinuumPath
    tau: np.ndarray
    Dt: np.ndarray  # reflected process on the tau grid (D / sqrt 2)
    S: np.ndarray  # Skorohod push on the tau grid
    t_of_tau: np.ndarray
    meet_index: int  # first tau index from which reflection is active
    time_together: float  # Lebesgue measure of {t <= T : L = R}

    def __iter__(self):
        yield self.L
        yield self.R

    @property
    def D(self) -> np.ndarray:
        return self.R.x - self.L.x

    def skorohod_violations(self, tol: float = 1e-12) -> list[str]:
        out = []
        k = self.meet_index
        Dt, S = self.Dt[k:], self.S[k:]
        if Dt.size and Dt.min() < -tol:
            out.append(f"reflected process negative ({Dt.min():.3g})")
        if np.any(np.diff(self.S) < -tol):
            out.append("push decreases")
        grow = np.diff(S) > tol
        if np.any(np.abs(Dt[1:][grow]) > tol):
            out.append("push grows away from zero")
        if np.any(np.diff(self.t_of_tau) <= 0):
            out.append("time change not strictly increasing")
        if k < self.L.x.size and k < self.tau.size and Dt.size and self.S[-1] > 0 and Dt.min() > tol:
            out.append("reflected process never touches zero")
        return out


def solve_left_right(L0: float, R0: float, T: float, dt: float, seed=0, substeps: int = 8,
                     rng: np.random.Generator | None = None) -> LeftRight:
    """Left-right SDE from (L0, R0) on [0, T], reported on a grid of step dt.

    The tau grid has step dt/substeps.  If L0 > R0 the pair first runs as two
    independent drifted motions until D reaches zero; reflection starts there.
    """
    if not (dt > 0 and T > 0):
        raise ValueError("need dt > 0 and T > 0")
    if dt >= T:
        raise ValueError("dt must be smaller than T")
    if rng is None:
        s = as_seed(seed)
        rng = np.random.default_rng(int(s.key(TAG_GAUSS)))
    dtau = dt / substeps
    n = int(math.ceil(T / dtau)) + 1  # t(tau) >= tau, so tau <= T suffices
    tau = dtau * np.arange(n + 1)
    B = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n)) * math.sqrt(dtau)])
    Z = B + SQ2 * tau + (R0 - L0) / SQ2
    hit = np.flatnonzero(Z >= 0.0)
    k = int(hit[0]) if hit.size else n + 1
    S = np.zeros_like(Z)
    if k <= n:
        S[k:] = np.maximum(0.0, -np.minimum.accumulate(Z[k:])) + 0.0  # no -0.0
    Dt = Z + S
    t_of = tau + S / SQ2
    clock = 2.0 * tau + 2.0 * SQ2 * S
    W = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n) * np.sqrt(np.diff(clock)))])
    sigma = (L0 + R0) + W
    D = SQ2 * Dt
    m = _grid_len(T, dt)
    tg = dt * np.arange(m)
    Dg = np.interp(tg, t_of, D)
    sg = np.interp(tg, t_of, sigma)
    if k <= n:
        # t(tau) crosses the meeting time between grid nodes; keep D >= 0 after it
        t_meet = t_of[k]
        Dg = np.where(tg >= t_meet, np.maximum(Dg, 0.0), Dg)
    L = ContinuumPath(0.0, dt, 0.5 * (sg - Dg))
    R = ContinuumPath(0.0, dt, 0.5 * (sg + Dg))
    # Lebesgue time together up to T: S/sqrt(2) at the tau where t(tau) = T
    together = float(np.interp(T, t_of, S)) / SQ2
    return LeftRight(L, R, tau, Dt, S, t_of, k, together)


@dataclass(frozen=True, eq=False)
class StickyRunReport:
    T: float
    dt: float
    reps: int
    together_fraction: EstimateCI  # exact Lebesgue fraction of [0, T] with L = R
    grid_fraction: EstimateCI  # fraction of grid times with D < 3 sqrt(dt)
    drift_L: EstimateCI  # L_T - L_0
    drift_R: EstimateCI
    covariation: EstimateCI  # sum over the grid of dL dR
    skorohod_violations: int
    ordering_violations: int
    D_T: np.ndarray

    def __post_init__(self):
        for f in (self.together_fraction, self.grid_fraction):
            if not 0.0 <= f.mean <= 1.0:
                raise ValueError("fraction outside [0, 1]")

    def z_positive(self) -> float:
        f = self.together_fraction
        return f.mean / f.std_err if f.std_err > 0 else math.inf

    def to_dict(self) -> dict:
        return {"T": self.T, "dt": self.dt, "reps": self.reps,
                "together_fraction": self.together_fraction.to_dict(),
                "grid_fraction": self.grid_fraction.to_dict(),
                "drift_L": self.drift_L.to_dict(), "drift_R": self.drift_R.to_dict(),
                "covariation": self.covariation.to_dict(),
                "skorohod_violations": self.skorohod_violations,
                "ordering_violations": self.ordering_violations}


def sticky_pair(L0: float = 0.0, R0: float = 0.0, T: float = 1.0, dt: float = 1e-3,
                reps: int = 1000, seed=0, substeps: int = 8, first_replica: int = 0,
                strict: bool = True) -> StickyRunReport:
    """Replicated ``solve_left_right`` with the pathwise checks applied to every run."""
    s = as_seed(seed)
    keys = replica_keys(s.master_seed, reps, TAG_GAUSS, first=first_replica)
    tog, gfr, dl, dr, cov, dT = [], [], [], [], [], []
    n_sk = n_ord = 0
    thr = 3.0 * math.sqrt(dt)
    for r in range(reps):
        sol = solve_left_right(L0, R0, T, dt, substeps=substeps,
                               rng=np.random.default_rng(int(keys[r])))
        viol = sol.skorohod_violations()
        D = sol.D
        met = sol.meet_index <= sol.tau.size - 1
        after = sol.L.times >= (sol.t_of_tau[sol.meet_index] if met else np.inf)
        bad_order = bool(np.any(D[after] < -1e-12))
        if strict and (viol or bad_order):
            raise AssertionError(f"replica {r}: {viol or ['L > R after meeting']}")
        n_sk += bool(viol)
        n_ord += bad_order
        tog.append(sol.time_together / T)
        gfr.append(float(np.mean(np.abs(D) < thr)))
        dl.append(sol.L.x[-1] - L0)
        dr.append(sol.R.x[-1] - R0)
        cov.append(float(np.sum(np.diff(sol.L.x) * np.diff(sol.R.x))))
        dT.append(D[-1])
    return StickyRunReport(T, dt, reps, mean_ci(tog), mean_ci(gfr), mean_ci(dl), mean_ci(dr),
                           mean_ci(cov), n_sk, n_ord, np.array(dT))


# ---------------------------------------------------------------------------
# Lattice counterpart: leftmost and rightmost paths of the branching-coalescing walks

@njit(cache=True)
def _lr_lattice(keys, n_steps, a1, a2):
    out = np.empty(keys.shape[0], np.int64)
    for r in range(keys.shape[0]):
        l = 0
        rr = 0
        for t in range(n_steps):
            ul = site_uniform(keys[r], l, t, 0)
            # Both arrows (u >= a2): l goes left, r goes right
            l += 1 if (ul >= a1 and ul < a2) else -1
            ur = site_uniform(keys[r], rr, t, 0)
            rr += -1 if ur < a1 else 1
        out[r] = rr - l
    return out


def lattice_left_right(eps: float, T: float, reps: int, seed=0) -> np.ndarray:
    """R_T - L_T for the leftmost/rightmost paths from one site of the eps net, rescaled."""
    s = as_seed(seed)
    keys = replica_keys(s.master_seed, reps, TAG_ARROWS)
    a1, a2, _ = thresholds("net", eps)
    n = int(math.ceil(T / eps**2 - 1e-9))
    return eps * _lr_lattice(keys, n, a1, a2).astype(float)


# ---------------------------------------------------------------------------
# n walkers in one Howitt-Warren environment

@njit(cache=True)
def _npoint_run(keys, x0, n_steps, every, cum, q0, q1, kind, pa, pb):
    reps = keys.shape[0]
    n = x0.shape[0]
    m = n_steps // every + 1
    paths = np.empty((reps, n, m), np.int64)
    cov = np.zeros((reps, n, n, m), np.int64)  # cumulative sum of dXi dXj
    coinc = np.zeros((reps, n, n, m), np.int64)  # cumulative count of Xi = Xj
    dx = np.empty(n, np.int64)
    for r in range(reps):
        ek = sub_key(keys[r], 0)
        pos = x0.copy()
        c = np.zeros((n, n), np.int64)
        k = np.zeros((n, n), np.int64)
        paths[r, :, 0] = pos
        for t in range(n_steps):
            for i in range(n):
                om = mu_draw(cum, q0, q1, kind, pa, pb, ek, pos[i], t)
                dx[i] = 1 if site_uniform(sub_key(keys[r], i + 1), 0, t, 0) < om else -1
            for i in range(n):
                for j in range(n):
                    c[i, j] += dx[i] * dx[j]
                    if pos[i] == pos[j]:
                        k[i, j] += 1
            for i in range(n):
                pos[i] += dx[i]
            if (t + 1) % every == 0:
                s = (t + 1) // every
                paths[r, :, s] = pos
                cov[r, :, :, s] = c
                coinc[r, :, :, s] = k
    return paths, cov, coinc


@dataclass(frozen=True, eq=False)
class StickyEnsemble:
    eps: float
    dt_report: float
    x: np.ndarray  # (reps, n, m) rescaled positions
    covariation: np.ndarray  # (reps, n, n, m): eps^2 sum dXi dXj
    coincidence: np.ndarray  # (reps, n, n, m): eps^2 #{steps with Xi = Xj}
    mu: MuSpec
    seed: int

    @property
    def reps(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt_report * np.arange(self.x.shape[2])

    def path(self, rep: int, i: int) -> ContinuumPath:
        return ContinuumPath(0.0, self.dt_report, self.x[rep, i].astype(float))

    def rows(self):
        t = self.times
        for r in range(self.reps):
            for k in range(t.size):
                for i in range(self.n):
                    yield {"replica": r, "t": float(t[k]), "walker": i, "x": float(self.x[r, i, k])}


def npoint_sticky(n: int, beta: float = 0.0, nu: FiniteMeasure | None = None, T: float = 1.0,
                  eps: float = 0.02, dt_report: float = 0.01, reps: int = 1000, seed=0,
                  x0=None, mu: MuSpec | None = None) -> StickyEnsemble:
    """n walkers in a shared environment with site law mu_eps(beta, nu), scaled by (eps x, eps^2 t).

    ``x0`` holds continuum starting points (default: all at 0); they are
    rounded to the even sublattice.  An explicit ``mu`` overrides (beta, nu).
    """
    if n < 1:
        raise ValueError("need at least one walker")
    if mu is None:
        if nu is None:
            nu = FiniteMeasure.zero()
        mu = mu_eps_net(beta, nu, eps)
    s = as_seed(seed)
    every = max(1, int(round(dt_report / eps**2)))
    n_steps = every * int(math.ceil(T / (every * eps**2) - 1e-9))
    if x0 is None:
        lx = np.zeros(n, np.int64)
    else:
        x0 = np.asarray(x0, float)
        if x0.size != n:
            raise ValueError("x0 must have n entries")
        lx = 2 * np.round(x0 / (2 * eps)).astype(np.int64)
    keys = replica_keys(s.master_seed, reps, TAG_WALKER)
    paths, cov, coinc = _npoint_run(keys, lx, n_steps, every, *MuTable.build(mu).arrays())
    e2 = eps**2
    return StickyEnsemble(eps, every * e2, eps * paths, e2 * cov, e2 * coinc, mu, s.master_seed)


@dataclass(frozen=True, eq=False)
class CovariationReport:
    t: float
    pairs: list  # (i, j)
    covariation: list  # EstimateCI per pair
    coincidence: list
    difference: list  # EstimateCI of covariation - coincidence (paired)
    rel_diff: list

    def rows(self):
        for (i, j), c, k, d, rd in zip(self.pairs, self.covariation, self.coincidence,
                                       self.difference, self.rel_diff):
            yield {"i": i, "j": j, "covariation": c.mean, "cov_lo": c.ci_lo, "cov_hi": c.ci_hi,
                   "coincidence": k.mean, "coinc_lo": k.ci_lo, "coinc_hi": k.ci_hi,
                   "rel_diff": rd}

    def within(self, rel: float) -> bool:
        return all(abs(r) <= rel for r in self.rel_diff if np.isfinite(r))


def check_covariation(ens: StickyEnsemble, t: float | None = None,
                      pairs=None) -> CovariationReport:
    """Realized covariation against coincidence time at time t (default: the end)."""
    if ens.n < 2:
        raise ValueError("need at least two walkers")
    k = ens.x.shape[2] - 1 if t is None else int(round(t / ens.dt_report))
    if pairs is None:
        pairs = [(i, j) for i in range(ens.n) for j in range(i, ens.n)]
    cv, co, df, rd = [], [], [], []
    for i, j in pairs:
        a = ens.covariation[:, i, j, k]
        b = ens.coincidence[:, i, j, k]
        cv.append(mean_ci(a))
        co.append(mean_ci(b))
        df.append(mean_ci(a - b))
        rd.append((a.mean() - b.mean()) / b.mean() if b.mean() > 0 else math.nan)
    return CovariationReport(k * ens.dt_report, list(pairs), cv, co, df, rd)


@dataclass(frozen=True)
class SlopeReport:
    slope: float
    stderr: float
    target: float
    t_max: float
    ratio: float  # E[max X] / E[coincidence time] at t_max

    @property
    def rel_err(self) -> float:
        return abs(self.slope - self.target) / abs(self.target)


def max_slope(ens: StickyEnsemble, t_max: float = 0.2, target: float | None = None,
              powers=(1.0, 1.5, 2.0)) -> SlopeReport:
    """Initial slope of E[max_i X_i(t)] on (0, t_max].

    Time spent together by sticky motions expands in powers of sqrt(t), so the
    curve is fitted by a t + b t^1.5 + c t^2 and ``a`` is returned.
    """
    t = ens.times
    sel = (t > 0) & (t <= t_max + 1e-12)
    mx = ens.x.max(axis=1)[:, sel]  # (reps, k)
    y = mx.mean(axis=0)
    A = np.column_stack([t[sel] ** p for p in powers])
    P = np.linalg.pinv(A)
    coef = P @ y
    # standard error from the replica covariance of the curve
    C = np.cov(mx, rowvar=False) / mx.shape[0]
    se = float(math.sqrt(max((P @ C @ P.T)[0, 0], 0.0)))
    k = int(np.flatnonzero(sel)[-1])
    co = ens.coincidence[:, 0, 1, k].mean() if ens.n > 1 else math.nan
    ratio = float(ens.x.max(axis=1)[:, k].mean() / co) if co > 0 else math.nan
    return SlopeReport(float(coef[0]), se, math.nan if target is None else float(target), t_max,
                       ratio)
