"""Random walks in i.i.d. space-time environments: exact kernels, n-point
motions, the measure-valued evolution and its stationary atoms."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special

from .lattice import Environment, LatticeWindow
from .mu import (FiniteMeasure, MuSpec, MuTable, beta_plus, check_mucon, mu_draw,
                 mu_eps_beta, mu_eps_net, mucon_discrepancy)
from .rng import TAG_OMEGA, TAG_WALKER, as_seed, replica_keys, site_uniform, sub_key
from .stats import EstimateCI, binomial_ci, mean_ci

__all__ = [
    "FiniteMeasure", "MuSpec", "mu_eps_net", "mu_eps_beta", "beta_plus", "check_mucon",
    "mucon_discrepancy", "TransitionKernel", "kernel", "compose", "npoint_kernel",
    "NPointLaw", "MeasureState", "hw_evolve", "stationary_atoms", "AtomReport", "atom_tail",
    "pair_meet_weight", "pair_meet_prob", "second_moment_exact",
]


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    s: int
    t: int
    sources: np.ndarray
    targets: np.ndarray
    P: np.ndarray  # P[i, k] = K_{s,t}(sources[i], targets[k])
    substochastic: np.ndarray  # rows that lost mass through the window edge

    def prob(self, x: int, y: int) -> float:
        i = np.searchsorted(self.sources, x)
        k = np.searchsorted(self.targets, y)
        if i >= self.sources.size or self.sources[i] != x:
            raise KeyError(x)
        if k >= self.targets.size or self.targets[k] != y:
            return 0.0
        return float(self.P[i, k])

    def row(self, x: int) -> dict:
        i = int(np.searchsorted(self.sources, x))
        if i >= self.sources.size or self.sources[i] != x:
            raise KeyError(x)
        return {int(y): float(p) for y, p in zip(self.targets, self.P[i]) if p > 0}

    def row_sums(self) -> np.ndarray:
        return self.P.sum(axis=1)

    def rows(self):
        for i, x in enumerate(self.sources):
            for k, y in enumerate(self.targets):
                yield {"x": int(x), "y": int(y), "probability": float(self.P[i, k])}


def _omega_row(env: Environment, u: int) -> np.ndarray:
    return env.omega[u - env.window.t_min]


def _propagate(env: Environment, M: np.ndarray, s: int, t: int) -> np.ndarray:
    """Push row vectors over full-width columns from time s to time t."""
    for u in range(s, t):
        om = _omega_row(env, u)
        nxt = np.zeros_like(M)
        nxt[..., 1:] += M[..., :-1] * om[:-1]
        nxt[..., :-1] += M[..., 1:] * (1.0 - om[1:])
        M = nxt
    return M


def kernel(env: Environment, s: int, t: int, x0=None) -> TransitionKernel:
    """Exact K_{s,t}(x, .) by forward recursion; mass leaving the window is lost."""
    w = env.window
    if not (w.t_min <= s <= t <= w.t_max):
        raise ValueError("need t_min <= s <= t <= t_max")
    if x0 is None:
        src = w.sites_at(s)
    else:
        src = np.atleast_1d(np.asarray(x0, dtype=np.int64))
        for x in src:
            if not w.is_site(int(x), s):
                raise ValueError(f"source ({x}, {s}) is not a site of the window")
        src = np.unique(src)
    M = np.zeros((src.size, w.nx))
    M[np.arange(src.size), src - w.x_min] = 1.0
    M = _propagate(env, M, s, t)
    tg = w.sites_at(t)
    P = M[:, tg - w.x_min]
    sub = P.sum(axis=1) < 1.0 - 1e-12
    return TransitionKernel(s, t, src, tg, P, sub)


def compose(a: TransitionKernel, b: TransitionKernel) -> TransitionKernel:
    """K_{s,t} K_{t,u}; b must have every target of a as a source."""
    if a.t != b.s:
        raise ValueError("kernels are not composable")
    idx = np.searchsorted(b.sources, a.targets)
    if np.any(idx >= b.sources.size) or np.any(b.sources[np.minimum(idx, b.sources.size - 1)] != a.targets):
        raise ValueError("second kernel lacks some intermediate sources")
    P = a.P @ b.P[idx]
    return TransitionKernel(a.s, b.t, a.sources, b.targets, P, P.sum(axis=1) < 1.0 - 1e-12)


# ---------------------------------------------------------------------------
# n-point motions

@dataclass(frozen=True, eq=False)
class NPointLaw:
    n: int
    steps: int
    states: np.ndarray  # (m, n) final positions
    probs: np.ndarray
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    reps: int | None = None

    def prob(self, state) -> float:
        st = tuple(int(v) for v in state)
        for row, p in zip(self.states, self.probs):
            if tuple(row) == st:
                return float(p)
        return 0.0

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in r): float(p) for r, p in zip(self.states, self.probs)}

    def marginal(self, keep) -> dict:
        keep = list(keep)
        out = {}
        for r, p in zip(self.states, self.probs):
            k = tuple(int(r[i]) for i in keep)
            out[k] = out.get(k, 0.0) + float(p)
        return out


def _group_moves(mu: FiniteMeasure, k: int):
    """Labelled move vectors for k co-located walkers with their probabilities."""
    out = []
    for moves in itertools.product((-1, 1), repeat=k):
        j = sum(1 for m in moves if m > 0)
        out.append((moves, mu.moment(j, k - j)))
    return out


def _exact_npoint(mu, x0, steps):
    n = len(x0)
    law = {tuple(x0): 1.0}
    cache = {}
    for _ in range(steps):
        nxt = {}
        for state, p in law.items():
            groups = {}
            for i, x in enumerate(state):
                groups.setdefault(x, []).append(i)
            parts = []
            for x, idx in groups.items():
                k = len(idx)
                if k not in cache:
                    cache[k] = _group_moves(mu, k)
                parts.append((idx, cache[k]))
            for combo in itertools.product(*[c for _, c in parts]):
                q = p
                new = list(state)
                for (idx, _), (moves, pr) in zip(parts, combo):
                    q *= pr
                    for i, m in zip(idx, moves):
                        new[i] = state[i] + m
                if q > 0:
                    key = tuple(new)
                    nxt[key] = nxt.get(key, 0.0) + q
        law = nxt
    states = np.array(sorted(law), dtype=np.int64).reshape(-1, n)
    probs = np.array([law[tuple(s)] for s in states])
    return states, probs


@njit(cache=True)
def _walkers_mc(keys, x0, steps, cum, q0, q1, kind, pa, pb):
    reps = keys.shape[0]
    n = x0.shape[0]
    out = np.empty((reps, n), np.int64)
    for r in range(reps):
        ek = sub_key(keys[r], 0)  # environment
        pos = x0.copy()
        for t in range(steps):
            for i in range(n):
                om = mu_draw(cum, q0, q1, kind, pa, pb, ek, pos[i], t)
                wk = sub_key(keys[r], i + 1)
                pos[i] += 1 if site_uniform(wk, 0, t, 0) < om else -1
        out[r] = pos
    return out


def npoint_kernel(mu: FiniteMeasure, n: int, steps: int, method: str = "exact",
                  reps: int = 10000, seed=0, x0=None) -> NPointLaw:
    """Joint law of n walkers after ``steps`` steps in one shared environment.

    ``method="exact"`` enumerates states; co-located walkers make a labelled
    move with j right jumps out of k with probability E[w^j (1-w)^(k-j)].
    """
    x0 = np.zeros(n, np.int64) if x0 is None else np.asarray(x0, np.int64)
    if x0.size != n:
        raise ValueError("x0 must have n entries")
    if np.any((x0 - x0[0]) % 2):
        raise ValueError("walkers must start on one sublattice")
    if method == "exact":
        if n > 4 or steps > 12 or (x0.max() - x0.min() + 2 * steps) > 32:
            raise ValueError("exact method limited to n <= 4, steps <= 12, window <= 32")
        states, probs = _exact_npoint(mu, [int(v) for v in x0], steps)
        return NPointLaw(n, steps, states, probs)
    if method == "monte_carlo":
        seed = as_seed(seed)
        keys = replica_keys(seed.master_seed, reps, TAG_WALKER)
        fin = _walkers_mc(keys, x0, steps, *MuTable.build(mu).arrays())
        states, counts = np.unique(fin, axis=0, return_counts=True)
        cis = [binomial_ci(int(c), reps) for c in counts]
        return NPointLaw(n, steps, states, counts / reps,
                         np.array([c.ci_lo for c in cis]), np.array([c.ci_hi for c in cis]), reps)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Measure-valued evolution

@dataclass(frozen=True, eq=False)
class MeasureState:
    time: int
    window: LatticeWindow
    masses: np.ndarray  # over columns x_min..x_max; zero off the sublattice
    boundary_loss: float = 0.0

    @classmethod
    def delta(cls, window: LatticeWindow, x: int, t: int, mass: float = 1.0):
        if not window.is_site(x, t):
            raise ValueError("not a site of the window")
        m = np.zeros(window.nx)
        m[x - window.x_min] = mass
        return cls(t, window, m)

    @classmethod
    def uniform(cls, window: LatticeWindow, t: int, per_site: float):
        m = np.zeros(window.nx)
        m[window.sites_at(t) - window.x_min] = per_site
        return cls(t, window, m)

    def total(self) -> float:
        return float(self.masses.sum())

    def at(self, x: int) -> float:
        return float(self.masses[x - self.window.x_min])

    def __add__(self, other):
        if self.time != other.time or self.window != other.window:
            raise ValueError("states differ in time or window")
        return MeasureState(self.time, self.window, self.masses + other.masses,
                            self.boundary_loss + other.boundary_loss)

    def __mul__(self, c: float):
        return MeasureState(self.time, self.window, self.masses * c, self.boundary_loss * c)

    __rmul__ = __mul__


def hw_evolve(env: Environment, rho: MeasureState, t_target: int) -> MeasureState:
    """rho_{t+1}(y) = rho_t(y-1) w(y-1, t) + rho_t(y+1) (1 - w(y+1, t))."""
    w = env.window
    if rho.window != w:
        raise ValueError("state and environment windows differ")
    if not rho.time <= t_target <= w.t_max:
        raise ValueError("t_target outside [rho.time, t_max]")
    m = _propagate(env, rho.masses, rho.time, t_target)
    loss = rho.boundary_loss + (rho.total() - float(m.sum()))
    return MeasureState(t_target, w, m, loss)


# ---------------------------------------------------------------------------
# Stationary atoms on a ring

@njit(cache=True)
def _ring_evolve(key, mass, t0, t1, cum, q0, q1, kind, pa, pb):
    """Evolve site masses on a ring of len(mass) sites (circumference 2M).

    Site i at time t sits at x = 2i + (t mod 2).
    """
    M = mass.shape[0]
    L = 2 * M
    nxt = np.empty_like(mass)
    for t in range(t0, t1):
        p = t % 2
        nxt[:] = 0.0
        for i in range(M):
            m = mass[i]
            x = 2 * i + p
            om = mu_draw(cum, q0, q1, kind, pa, pb, key, x % L, t)
            # right neighbour x+1 and left neighbour x-1 at time t+1
            if p == 0:
                ir, il = i, i - 1
            else:
                ir, il = i + 1, i
            if il < 0:
                il += M
            if ir >= M:
                ir -= M
            nxt[ir] += m * om
            nxt[il] += m * (1.0 - om)
        mass, nxt = nxt, mass
    return mass


def atom_tail(u, scale: float = 1.0):
    """Atoms above u per unit length for intensity dx x v^-1 e^(-v/scale) dv / scale."""
    return special.exp1(np.asarray(u, float) / scale) / scale


def pair_meet_weight(mu: FiniteMeasure, eps: float) -> float:
    """Stationary weight at 0 of the gap of two walkers, per unit length of Lebesgue.

    The gap moves on 2Z, leaves 0 w.p. 2 E[w(1-w)] and returns at rate 1/4
    from +-2; reversibility gives pi(0) = 2 eps / (4 E[w(1-w)]).
    """
    return eps / (2.0 * mu.moment(1, 1))


def pair_meet_prob(mu: FiniteMeasure, n: int) -> float:
    """P(gap = 0 after n steps) for two walkers started together, exactly."""
    split = 2.0 * mu.moment(1, 1)
    p = np.zeros(2 * n + 3)  # gap/2 in [-(n+1), n+1]
    c = n + 1
    p[c] = 1.0
    for _ in range(n):
        q = np.zeros_like(p)
        q[c] += p[c] * (1 - split)
        q[c - 1] += p[c] * split / 2
        q[c + 1] += p[c] * split / 2
        off = p.copy()
        off[c] = 0.0
        q += 0.5 * off
        q[1:] += 0.25 * off[:-1]
        q[:-1] += 0.25 * off[1:]
        p = q
    return float(p[c])


def second_moment_exact(mu: FiniteMeasure, eps: float, n: int) -> float:
    """E[sum_x rho_n(x)^2] per unit length from Lebesgue initial mass (2 eps per site)."""
    c = pair_meet_weight(mu, eps)
    return c - (c - 2 * eps) * pair_meet_prob(mu, n)


@dataclass(frozen=True)
class AtomReport:
    a: float
    eps: float
    t_burn: float
    us: tuple
    empirical: list  # EstimateCI per u: atoms with mass > u per unit length
    empirical_half: list  # same at t_burn / 2
    predicted: tuple  # E1(u/a)/a: the stated law (E1(u) at a = 1)
    predicted_pair: tuple  # E1(2au) 2a: the law whose second moment matches the pair chain
    plateau: bool
    mass_per_length: EstimateCI
    second_moment: EstimateCI  # sum of squared site masses per unit length
    second_moment_exact: float
    second_moment_limit: float
    cutoff_counts: dict  # atoms per unit length above (factor x mean site mass)
    reps: int
    length: float
    seed: int

    def rows(self):
        for u, e, p, q in zip(self.us, self.empirical, self.predicted, self.predicted_pair):
            yield {"u": u, "empirical_N": e.mean, "predicted_N": p, "ci_lo": e.ci_lo,
                   "ci_hi": e.ci_hi, "pair_consistent_N": q}

    def rel_errs(self, which: str = "predicted"):
        ref = self.predicted if which == "predicted" else self.predicted_pair
        return [abs(e.mean - p) / p for e, p in zip(self.empirical, ref)]

    def to_dict(self) -> dict:
        return {"a": self.a, "eps": self.eps, "t_burn": self.t_burn, "us": list(self.us),
                "empirical": [e.to_dict() for e in self.empirical],
                "empirical_half": [e.to_dict() for e in self.empirical_half],
                "predicted": list(self.predicted), "predicted_pair": list(self.predicted_pair),
                "plateau": self.plateau, "mass_per_length": self.mass_per_length.to_dict(),
                "second_moment": self.second_moment.to_dict(),
                "second_moment_exact": self.second_moment_exact,
                "second_moment_limit": self.second_moment_limit,
                "cutoff_counts": {str(k): v for k, v in self.cutoff_counts.items()},
                "reps": self.reps, "length": self.length, "seed": self.seed}


def stationary_atoms(a: float = 1.0, eps: float = 0.01, t_burn: float = 8.0,
                     width: float = 100.0, reps: int = 4, seed=0,
                     us=(0.1, 0.5, 1.0), cutoff: float = 1e-3) -> AtomReport:
    """Atom statistics of the evolved measure in the Beta(2 a eps, 2 a eps) environment.

    The measure starts as Lebesgue measure (mass 2 eps on every site of the
    even sublattice, i.e. mass 1 per unit length) on a periodic ring of
    ``width`` continuum units, and is evolved for t_burn / eps^2 steps.
    Statistics are per unit length, pooled over replicas; the CI treats each
    replica as one sample.
    """
    if reps < 2:
        raise ValueError("need at least 2 replicas")
    seed = as_seed(seed)
    mu = mu_eps_beta(a, eps)
    tab = MuTable.build(mu).arrays()
    M = int(round(width / (2 * eps)))
    length = 2 * M * eps
    n = int(np.ceil(t_burn / eps**2 - 1e-9))
    n_half = n // 2
    site0 = 2 * eps
    keys = replica_keys(seed.master_seed, reps, TAG_OMEGA)
    us = tuple(float(u) for u in us)
    cnt, cnt_half, tot, sq = [], [], [], []
    factors = (0.1, 1.0, 10.0)
    cut = {f: [] for f in factors}
    for r in range(reps):
        m = np.full(M, site0)
        m = _ring_evolve(keys[r], m, 0, n_half, *tab)
        cnt_half.append([np.sum(m > u) / length for u in us])
        m = _ring_evolve(keys[r], m, n_half, n, *tab)
        cnt.append([np.sum(m > u) / length for u in us])
        tot.append(m.sum() / length)
        sq.append(np.sum(m * m) / length)
        for f in factors:
            cut[f].append(np.sum(m > f * cutoff * site0) / length)
    cnt, cnt_half = np.array(cnt), np.array(cnt_half)
    emp = [mean_ci(cnt[:, i]) for i in range(len(us))]
    emph = [mean_ci(cnt_half[:, i]) for i in range(len(us))]
    plateau = all(not (x.ci_hi < y.ci_lo or y.ci_hi < x.ci_lo) for x, y in zip(emp, emph))
    pred = tuple(float(v) for v in atom_tail(us, 1.0 / a))
    pred2 = tuple(float(v) for v in atom_tail(us, 1.0 / (2 * a)))
    return AtomReport(a, eps, t_burn, us, emp, emph, pred, pred2, plateau, mean_ci(tot),
                      mean_ci(sq), second_moment_exact(mu, eps, n), pair_meet_weight(mu, eps),
                      {f * cutoff: float(np.mean(v)) for f, v in cut.items()}, reps, length,
                      seed.master_seed)
