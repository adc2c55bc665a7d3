"""Finite measures on [0, 1] and the site laws of random environments.

A measure is a sum of three parts, any of which may be empty:

* point masses (``atoms_q``, ``atoms_w``),
* a piecewise-constant density on a uniform grid (``cells`` holds cell masses),
* a weighted Beta(a, b) law kept in closed form.

The Beta part is needed because Beta(theta, theta) with small theta piles
almost all its mass within 1e-20 of the endpoints, and no reasonable uniform
grid can represent ``q(1-q) mu(dq)`` for such a law.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate, special

from .rng import site_uniform, site_uniform_open

DEFAULT_GRID = 1024
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class BetaPart:
    a: float
    b: float
    weight: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Beta parameters must be positive")
        if self.weight < 0:
            raise ValueError("negative weight")


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    atoms_q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atoms_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cells: np.ndarray | None = None
    beta_part: BetaPart | None = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.atoms_q, dtype=float))
        w = np.atleast_1d(np.asarray(self.atoms_w, dtype=float))
        if q.shape != w.shape:
            raise ValueError("atoms_q and atoms_w differ in length")
        if np.any((q < 0) | (q > 1)):
            raise ValueError("atom locations must lie in [0, 1]")
        if np.any(w < 0):
            raise ValueError("negative atom weight")
        object.__setattr__(self, "atoms_q", q)
        object.__setattr__(self, "atoms_w", w)
        if self.cells is not None:
            c = np.asarray(self.cells, dtype=float)
            if c.ndim != 1 or c.size == 0:
                raise ValueError("cells must be a non-empty 1-d array")
            if np.any(c < 0):
                raise ValueError("negative cell mass")
            object.__setattr__(self, "cells", c)

    # --- construction -------------------------------------------------------
    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def delta(cls, q: float, weight: float = 1.0):
        return cls(np.array([q]), np.array([weight]))

    @classmethod
    def atoms(cls, qs, ws):
        return cls(np.asarray(qs, float), np.asarray(ws, float))

    @classmethod
    def uniform(cls, grid: int = DEFAULT_GRID, weight: float = 1.0):
        return cls(cells=np.full(grid, weight / grid))

    @classmethod
    def beta_law(cls, a: float, b: float, weight: float = 1.0):
        return cls(beta_part=BetaPart(float(a), float(b), float(weight)))

    @classmethod
    def from_density(cls, f, grid: int = DEFAULT_GRID, total: float | None = None):
        edges = np.linspace(0.0, 1.0, grid + 1)
        c = np.array([_gl(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])])
        if total is not None:
            c *= total / c.sum()
        return cls(cells=c)

    def scaled(self, s: float) -> "FiniteMeasure":
        bp = self.beta_part
        return FiniteMeasure(
            self.atoms_q, self.atoms_w * s,
            None if self.cells is None else self.cells * s,
            None if bp is None else BetaPart(bp.a, bp.b, bp.weight * s),
        )

    def __add__(self, other: "FiniteMeasure"):
        if self.beta_part is not None and other.beta_part is not None:
            raise ValueError("at most one Beta component is supported")
        if self.cells is not None and other.cells is not None:
            if self.cells.size != other.cells.size:
                raise ValueError("grid sizes differ")
            cells = self.cells + other.cells
        else:
            cells = self.cells if self.cells is not None else other.cells
        return FiniteMeasure(
            np.concatenate([self.atoms_q, other.atoms_q]),
            np.concatenate([self.atoms_w, other.atoms_w]),
            cells,
            self.beta_part if self.beta_part is not None else other.beta_part,
        )

    # --- queries ------------------------------------------------------------
    @property
    def grid(self) -> int:
        return 0 if self.cells is None else self.cells.size

    def total_mass(self) -> float:
        m = float(self.atoms_w.sum())
        if self.cells is not None:
            m += float(self.cells.sum())
        if self.beta_part is not None:
            m += self.beta_part.weight
        return m

    def moment(self, j: int, m: int) -> float:
        """Integral of q^j (1-q)^m, exact for every component."""
        q, w = self.atoms_q, self.atoms_w
        tot = float(np.sum(w * q**j * (1 - q) ** m))
        if self.cells is not None:
            tot += self._cells_integral(lambda x: x**j * (1 - x) ** m)
        if self.beta_part is not None:
            a, b = self.beta_part.a, self.beta_part.b
            tot += self.beta_part.weight * np.exp(special.betaln(a + j, b + m) - special.betaln(a, b))
        return tot

    def integrate(self, f) -> float:
        """Integral of a vectorized function ``f``."""
        tot = float(np.sum(self.atoms_w * f(self.atoms_q))) if self.atoms_q.size else 0.0
        if self.cells is not None:
            tot += self._cells_integral(f)
        if self.beta_part is not None:
            a, b = self.beta_part.a, self.beta_part.b
            val, _ = integrate.quad(
                lambda x: f(np.asarray(x)), 0.0, 1.0, weight="alg", wvar=(a - 1, b - 1), limit=200
            )
            tot += self.beta_part.weight * val / special.beta(a, b)
        return tot

    def _cells_integral(self, f) -> float:
        g = self.cells.size
        h = 1.0 / g
        lo = np.arange(g) * h
        x = lo[:, None] + 0.5 * h * (_GL_X[None, :] + 1.0)
        vals = f(x) @ _GL_W * 0.5  # mean of f over each cell
        return float(np.sum(self.cells * vals))

    def weighted_cells(self, j: int, m: int, grid: int = DEFAULT_GRID) -> np.ndarray:
        """Masses of q^j (1-q)^m mu(dq) on the cells of a uniform grid."""
        out = np.zeros(grid)
        if self.atoms_q.size:
            idx = np.minimum((self.atoms_q * grid).astype(int), grid - 1)
            np.add.at(out, idx, self.atoms_w * self.atoms_q**j * (1 - self.atoms_q) ** m)
        if self.cells is not None:
            g = self.cells.size
            h = 1.0 / g
            x = np.arange(g)[:, None] * h + 0.5 * h * (_GL_X[None, :] + 1.0)
            part = self.cells * ((x**j * (1 - x) ** m) @ _GL_W * 0.5)
            edges_src = np.arange(g + 1) * h
            # redistribute source cells onto the target grid by overlap
            out += _regrid(part, edges_src, grid)
        if self.beta_part is not None:
            a, b = self.beta_part.a, self.beta_part.b
            edges = np.linspace(0, 1, grid + 1)
            cdf = special.betainc(a + j, b + m, edges)
            scale = np.exp(special.betaln(a + j, b + m) - special.betaln(a, b))
            out += self.beta_part.weight * scale * np.diff(cdf)
        return out

    def sampler(self) -> "MuTable":
        return MuTable.build(self)


def _regrid(masses, edges_src, grid):
    edges = np.linspace(0, 1, grid + 1)
    cum_src = np.concatenate([[0.0], np.cumsum(masses)])
    cum = np.interp(edges, edges_src, cum_src)
    return np.diff(cum)


def _gl(f, lo, hi):
    x = lo + 0.5 * (hi - lo) * (_GL_X + 1.0)
    return 0.5 * (hi - lo) * float(np.dot(_GL_W, f(x)))


class MuSpec(FiniteMeasure):
    """A probability measure on [0, 1]: the one-site law of an environment."""

    def __post_init__(self):
        super().__post_init__()
        tot = self.total_mass()
        if not abs(tot - 1.0) <= 1e-12:
            raise ValueError(f"MuSpec must have total mass 1, got {tot!r}")

    @classmethod
    def delta(cls, q: float):
        return cls(np.array([q]), np.array([1.0]))

    @classmethod
    def uniform(cls, grid: int = DEFAULT_GRID):
        return cls(cells=np.full(grid, 1.0 / grid))

    @classmethod
    def beta(cls, a: float, b: float | None = None):
        return cls(beta_part=BetaPart(float(a), float(a if b is None else b), 1.0))

    @classmethod
    def coin(cls):
        """Half mass at 0 and half at 1: the environment of the plain web."""
        return cls(np.array([0.0, 1.0]), np.array([0.5, 0.5]))

    @classmethod
    def net_form(cls, beta: float, nu: FiniteMeasure, eps: float):
        return mu_eps_net(beta, nu, eps)

    @classmethod
    def beta_lejan(cls, eps: float, a: float = 1.0):
        return mu_eps_beta(a, eps)

    @classmethod
    def from_density(cls, f, grid: int = DEFAULT_GRID):
        m = FiniteMeasure.from_density(f, grid)
        return cls(cells=m.cells / m.cells.sum())

    @classmethod
    def from_measure(cls, m: FiniteMeasure):
        return cls(m.atoms_q, m.atoms_w, m.cells, m.beta_part)

    def mean(self) -> float:
        return self.moment(1, 0)


# ---------------------------------------------------------------------------
# Sampling tables for compiled code

@dataclass(frozen=True, eq=False)
class MuTable:
    """Segment table: atoms (kind 0), grid cells (kind 1), Beta part (kind 2)."""

    cum: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    kind: np.ndarray
    pa: np.ndarray
    pb: np.ndarray

    @classmethod
    def build(cls, mu: FiniteMeasure) -> "MuTable":
        w, q0, q1, kind, pa, pb = [], [], [], [], [], []
        order = np.argsort(mu.atoms_q, kind="stable")
        for i in order:
            if mu.atoms_w[i] > 0:
                w.append(mu.atoms_w[i]); q0.append(mu.atoms_q[i]); q1.append(mu.atoms_q[i])
                kind.append(0); pa.append(0.0); pb.append(0.0)
        if mu.cells is not None:
            g = mu.cells.size
            for i in np.flatnonzero(mu.cells > 0):
                w.append(mu.cells[i]); q0.append(i / g); q1.append((i + 1) / g)
                kind.append(1); pa.append(0.0); pb.append(0.0)
        if mu.beta_part is not None and mu.beta_part.weight > 0:
            w.append(mu.beta_part.weight); q0.append(0.0); q1.append(1.0)
            kind.append(2); pa.append(mu.beta_part.a); pb.append(mu.beta_part.b)
        if not w:
            raise ValueError("cannot sample from the zero measure")
        w = np.asarray(w)
        cum = np.concatenate([[0.0], np.cumsum(w) / w.sum()])
        cum[-1] = 1.0
        return cls(cum, np.asarray(q0), np.asarray(q1), np.asarray(kind, np.int64),
                   np.asarray(pa), np.asarray(pb))

    def arrays(self):
        return self.cum, self.q0, self.q1, self.kind, self.pa, self.pb


@njit(cache=True)
def beta_johnk(a, b, key, x, t, k0):
    """Beta(a, b) by Johnk's rejection method, carried out in log space."""
    for it in range(100000):
        lu = np.log(site_uniform_open(key, x, t, k0 + 2 * it))
        lv = np.log(site_uniform_open(key, x, t, k0 + 2 * it + 1))
        lx = lu / a
        ly = lv / b
        mx = max(lx, ly)
        d = -abs(lx - ly)
        # skip exp() deep in underflow: libm is very slow there
        s = mx + (np.log1p(np.exp(d)) if d > -40.0 else 0.0)
        if s <= 0.0:
            e = lx - s
            return np.exp(e) if e > -745.0 else 0.0
    return a / (a + b)


@njit(cache=True)
def mu_draw(cum, q0, q1, kind, pa, pb, key, x, t):
    u = site_uniform(key, x, t, 0)
    n = kind.shape[0]
    k = np.searchsorted(cum, u, side="right") - 1
    if k < 0:
        k = 0
    elif k >= n:
        k = n - 1
    kk = kind[k]
    if kk == 0:
        return q0[k]
    if kk == 1:
        frac = (u - cum[k]) / (cum[k + 1] - cum[k])
        return q0[k] + (q1[k] - q0[k]) * frac
    return beta_johnk(pa[k], pb[k], key, x, t, 1)


# ---------------------------------------------------------------------------
# Diffusive-scaling site laws

def _nubar_parts(nu: FiniteMeasure):
    """Return b = int nu/(q(1-q)), int (2q-1) nu/(q(1-q)) and nu/(q(1-q))."""
    q, w = nu.atoms_q, nu.atoms_w
    keep = w > 0
    if np.any((q[keep] <= 0) | (q[keep] >= 1)):
        raise ValueError("nu must not charge 0 or 1")
    inv = FiniteMeasure(q[keep], w[keep] / (q[keep] * (1 - q[keep])))
    if nu.cells is not None and nu.cells.sum() > 0:
        g = nu.cells.size
        h = 1.0 / g
        x = np.arange(g)[:, None] * h + 0.5 * h * (_GL_X[None, :] + 1.0)
        avg = (1.0 / (x * (1 - x))) @ _GL_W * 0.5
        if nu.cells[0] > 0 or nu.cells[-1] > 0:
            raise ValueError("nu/(q(1-q)) is not integrable: nu has density at 0 or 1")
        inv = inv + FiniteMeasure(cells=nu.cells * avg)
    if nu.beta_part is not None and nu.beta_part.weight > 0:
        a, b = nu.beta_part.a, nu.beta_part.b
        if a <= 1 or b <= 1:
            raise ValueError("nu/(q(1-q)) is not integrable for this Beta component")
        s = np.exp(special.betaln(a - 1, b - 1) - special.betaln(a, b))
        inv = inv + FiniteMeasure(beta_part=BetaPart(a - 1, b - 1, nu.beta_part.weight * s))
    b_tot = inv.total_mass()
    c_part = inv.moment(1, 0) * 2 - b_tot
    return b_tot, c_part, inv


def mu_eps_net(beta: float, nu: FiniteMeasure, eps: float) -> MuSpec:
    """Site law whose diffusive limit has drift beta and characteristic measure nu.

    Mass ``b eps nubar`` on (0, 1) plus point masses at 0 and 1, where
    ``nubar = nu / (b q(1-q))`` is a probability measure.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    b, cint, inv = _nubar_parts(nu)
    c = beta - cint
    w0 = 0.5 * (1 - (b + c) * eps)
    w1 = 0.5 * (1 - (b - c) * eps)
    if w0 < 0 or w1 < 0:
        raise ValueError(f"eps={eps} too large for nu, beta (need eps <= 1/(b+|c|))")
    out = FiniteMeasure(np.array([0.0, 1.0]), np.array([w0, w1]))
    if b > 0:
        out = out + inv.scaled(eps)
    return MuSpec.from_measure(out)


def mu_eps_beta(a: float, eps: float) -> MuSpec:
    """Beta(2 a eps, 2 a eps): drift 0 and characteristic measure a dq in the limit."""
    if a <= 0:
        raise ValueError("a must be positive")
    if not 0 < eps < 1 / (4 * a):
        raise ValueError("need 0 < eps < 1/(4a)")
    th = 2.0 * a * eps
    return MuSpec.beta(th, th)


def beta_plus(beta: float, nu: FiniteMeasure, m: int) -> float:
    """Drift of the rightmost of m coincident walkers."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return beta + 2.0 * sum(nu.moment(0, k) for k in range(m - 1))


def mucon_discrepancy(mu: FiniteMeasure, eps: float, nu: FiniteMeasure, beta: float,
                      grid: int = 64) -> dict:
    """Compare eps^-1 q(1-q) mu with nu and eps^-1 (2q-1) mu with beta at one eps."""
    lhs = mu.weighted_cells(1, 1, grid) / eps
    rhs = nu.weighted_cells(0, 0, grid)
    drift = (2 * mu.moment(1, 0) - mu.total_mass()) / eps
    return {"cell_max_abs": float(np.max(np.abs(lhs - rhs))),
            "cell_max_rel": float(np.max(np.abs(lhs - rhs)) / max(rhs.max(), 1e-300)),
            "mass_lhs": float(lhs.sum()), "mass_rhs": float(rhs.sum()),
            "drift": float(drift), "drift_abs": float(abs(drift - beta))}


@dataclass(frozen=True, eq=False)
class MuconReport:
    eps: np.ndarray
    beta_hat: np.ndarray
    nu_mass: np.ndarray
    nu_cells: np.ndarray  # one row of grid cell masses per eps
    beta_limit: float
    nu_limit: np.ndarray
    divergent: bool


def check_mucon(family, eps_list, grid: int = 64) -> MuconReport:
    """Evaluate eps^-1 (2q-1) mu_eps and eps^-1 q(1-q) mu_eps along a family.

    Limits are extrapolated linearly in eps.  The family is flagged divergent
    when the mass of eps^-1 q(1-q) mu_eps grows like a negative power of eps.
    """
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if eps.size == 0:
        raise ValueError("empty eps_list")
    bh, nm, cells = [], [], []
    for e in eps:
        mu = family(e)
        bh.append((2 * mu.moment(1, 0) - mu.total_mass()) / e)
        c = mu.weighted_cells(1, 1, grid) / e
        cells.append(c)
        nm.append(c.sum())
    bh, nm, cells = np.array(bh), np.array(nm), np.array(cells)
    if eps.size >= 2:
        A = np.column_stack([np.ones_like(eps), eps])
        coef, *_ = np.linalg.lstsq(A, np.column_stack([bh, cells]), rcond=None)
        beta_lim, nu_lim = float(coef[0, 0]), coef[0, 1:]
        pos = nm > 0
        divergent = False
        if pos.sum() >= 2:
            slope = np.polyfit(np.log(eps[pos]), np.log(nm[pos]), 1)[0]
            divergent = bool(slope < -0.5)
    else:
        beta_lim, nu_lim, divergent = float(bh[0]), cells[0], False
    return MuconReport(eps, bh, nm, cells, beta_lim, nu_lim, divergent)
