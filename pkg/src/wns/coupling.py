"""Web/net coupling, relevant separation points, the finite graph and PMRCAs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numba import njit

from .lattice import (BOTH, LEFT, NONE, RIGHT, ArrowField, Environment, LatticeWindow,
                      gen_net_field, gen_web_field, thresholds)
from .paths import (_layout, net_steps, psi, reach_matrix, relsep_density_target,
                    web_density_target, web_steps)
from .rng import TAG_SIGN, TAG_SWITCH, as_seed, site_uniform
from .stats import EstimateCI, mean_ci


# ---------------------------------------------------------------------------
# Web inside net and net from web

@dataclass(eq=False)
class SignTable:
    """Signs at the both-sites of a field: +1 means the right branch."""

    window: LatticeWindow
    signs: np.ndarray
    law: str = "fair"

    def __getitem__(self, site):
        x, t = site
        w = self.window
        if not w.is_site(x, t):
            raise KeyError(site)
        s = int(self.signs[t - w.t_min, x - w.x_min])
        if s == 0:
            raise KeyError(site)
        return s

    def covers(self, f: ArrowField) -> bool:
        both = (f.arrows == BOTH) & f.window.mask()
        return f.window == self.window and bool(np.all(self.signs[both] != 0))

    def n_signs(self) -> int:
        return int(np.count_nonzero(self.signs))


@njit(cache=True)
def _signs(arrows, key, x_min, t_min, omega, fair):
    nt, nx = arrows.shape
    web = arrows.copy()
    sg = np.zeros((nt, nx), np.int8)
    for i in range(nt):
        for j in range(nx):
            if arrows[i, j] == 3:
                u = site_uniform(key, x_min + j, t_min + i, 0)
                p = 0.5 if fair else omega[i, j]
                if u < p:
                    sg[i, j] = 1
                    web[i, j] = 2
                else:
                    sg[i, j] = -1
                    web[i, j] = 1
    return web, sg


def sample_web_in_net(net: ArrowField, law="fair", seed=0):
    """Resolve every both-site of a net into one arrow.

    ``law`` is "fair" (each sign +1 with probability 1/2) or an Environment,
    in which case the sign at z is +1 with probability omega_z.
    """
    if net.kind != "net" or net.dual:
        raise ValueError("sample_web_in_net needs a forward net field")
    seed = as_seed(seed)
    if isinstance(law, Environment):
        if law.window != net.window:
            raise ValueError("environment window differs from the field window")
        omega, fair, name = law.omega, False, "omega"
    elif law == "fair":
        omega, fair, name = np.zeros((1, 1)), True, "fair"
    else:
        raise ValueError(f"unknown sign law {law!r}")
    w = net.window
    web, sg = _signs(net.arrows, seed.key(TAG_SIGN), w.x_min, w.t_min, omega, fair)
    return (ArrowField(w, web, "web", False, seed),
            SignTable(w, sg, name))


@njit(cache=True)
def _switch(arrows, key, x_min, t_min, parity, eps):
    nt, nx = arrows.shape
    out = arrows.copy()
    for i in range(nt):
        t = t_min + i
        j0 = (x_min + t - parity) % 2
        for j in range(j0, nx, 2):
            if site_uniform(key, x_min + j, t, 0) < eps:
                out[i, j] = 3
    return out


def switch_web_to_net(web: ArrowField, eps: float, seed) -> ArrowField:
    """Upgrade each site of a web independently to a both-site with probability eps."""
    if web.kind != "web" or web.dual:
        raise ValueError("switch_web_to_net needs a forward web field")
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    seed = as_seed(seed)
    w = web.window
    arr = _switch(web.arrows, seed.key(TAG_SWITCH), w.x_min, w.t_min, w.parity, float(eps))
    return ArrowField(w, arr, "net", False, seed, {"eps": float(eps)})


def site_law(kind: str, eps=0) -> dict:
    """Exact one-site law {code: probability} of a generator, from its cut points.

    ``eps`` may be a Fraction for exact arithmetic.
    """
    eps = Fraction(eps)
    if kind == "web":
        cuts = (Fraction(1, 2), Fraction(1), Fraction(1))
    elif kind == "net":
        thresholds("net", float(eps))  # range check only
        cuts = ((1 - eps) / 2, 1 - eps, Fraction(1))
    else:
        raise ValueError(f"no exact law for kind {kind!r}")
    a1, a2, a3 = cuts
    law = {LEFT: a1, RIGHT: a2 - a1, BOTH: a3 - a2, NONE: 1 - a3}
    return {c: p for c, p in law.items() if p}


def resolve_law(law: dict, p_right=None) -> dict:
    """Law after resolving a both-site to RIGHT with probability ``p_right`` (default 1/2)."""
    p = Fraction(1, 2) if p_right is None else Fraction(p_right)
    b = law.get(BOTH, 0)
    out = {LEFT: law.get(LEFT, 0) + b * (1 - p), RIGHT: law.get(RIGHT, 0) + b * p,
           NONE: law.get(NONE, 0)}
    return {c: q for c, q in out.items() if q}


def switch_law(law: dict, eps) -> dict:
    """Law after upgrading each site to a both-site with probability ``eps``."""
    eps = Fraction(eps)
    out = {c: q * (1 - eps) for c, q in law.items()}
    out[BOTH] = out.get(BOTH, 0) + eps
    return {c: q for c, q in out.items() if q}


# ---------------------------------------------------------------------------
# Relevant separation points

@njit(cache=True, inline="always")
def _lstep(c):
    if c & 1:
        return -1
    if c & 2:
        return 1
    return 0


@njit(cache=True, inline="always")
def _rstep(c):
    if c & 2:
        return 1
    if c & 1:
        return -1
    return 0


@njit(cache=True)
def _relsep_kernel(arrows, R, row_S, row_U, strict_U):
    nt, nx = arrows.shape
    xs = []
    ts = []
    for i in range(row_S + 1, row_U):
        for j in range(1, nx - 1):
            if not (R[i, j] and arrows[i, j] == 3):
                continue
            l = j - 1
            r = j + 1
            ok = True
            for k in range(i + 1, row_U):
                dl = _lstep(arrows[k, l])
                dr = _rstep(arrows[k, r])
                if dl == 0 or dr == 0:
                    ok = False
                    break
                l += dl
                r += dr
                if l < 0 or r >= nx:
                    ok = False
                    break
                if l >= r and (k + 1 < row_U or strict_U):
                    ok = False
                    break
            if ok:
                xs.append(j)
                ts.append(i)
    out = np.empty((len(xs), 2), np.int64)
    for k in range(len(xs)):
        out[k, 0] = xs[k]
        out[k, 1] = ts[k]
    return out


def _check_net(net):
    if net.dual or net.kind not in ("net", "web"):
        raise ValueError("expected a forward net field")


def relevant_separation_points(net: ArrowField, S: int, U: int, strict_at_U: bool = True,
                               reach_from=None) -> np.ndarray:
    """Both-sites z = (x, t), S < t < U, reachable from time S, whose leftmost
    continuation through x - 1 and rightmost continuation through x + 1 stay
    strictly apart up to time U.

    With ``strict_at_U=False`` the two continuations may meet exactly at U.
    Points whose continuations leave the window are not reported.
    ``reach_from`` restricts the time-S starting sites (default: all).
    """
    _check_net(net)
    if S >= U:
        raise ValueError("need S < U")
    w = net.window
    if S < w.t_min or U > w.t_max:
        raise ValueError("[S, U] must lie inside the window")
    xs = w.sites_at(S) if reach_from is None else np.asarray(reach_from, np.int64)
    occ = np.zeros(w.nx, np.bool_)
    occ[xs - w.x_min] = True
    R = reach_matrix(net.arrows, S - w.t_min, occ)
    pts = _relsep_kernel(net.arrows, R, S - w.t_min, U - w.t_min, strict_at_U)
    pts[:, 0] += w.x_min
    pts[:, 1] += w.t_min
    return pts


@dataclass(frozen=True)
class RelsepReport:
    eps: float
    band: tuple
    estimate: EstimateCI
    target: float
    target_band: float
    reps: int
    seed: int
    counts: np.ndarray = field(repr=False)

    @property
    def rel_err(self):
        return self.estimate.rel_err(self.target)


def relsep_density(eps: float, reps: int, seed, width: float = 20.0, band=(0.45, 0.55),
                   S: float = 0.0, U: float = 1.0, strict_at_U: bool = True,
                   rotate: bool = False) -> RelsepReport:
    """Relevant separation points per unit continuum area in the time band.

    With ``rotate=True`` the points are counted in the 180-degree rotated dual
    field over the reflected time interval instead.
    """
    from .lattice import dual_field, rotate_dual

    seed = as_seed(seed)
    nS, nU = 0, net_steps(U - S, eps)
    unit, m_half, half = _layout("net", eps, 1.0, nU, width)
    lo = int(math.ceil((band[0] - S) / eps**2))
    hi = int(math.floor((band[1] - S) / eps**2))
    dens = np.empty(reps)
    counts = np.empty(reps, np.int64)
    for r in range(reps):
        f = gen_net_field(LatticeWindow(-half, half, nS, nU), eps, seed.replica(r))
        if rotate:
            # the rotated field covers times [-nU - 1, -1]
            f = rotate_dual(dual_field(f))
            s0 = f.window.t_min
        else:
            s0 = nS
        pts = relevant_separation_points(f, s0, s0 + nU, strict_at_U)
        dt = pts[:, 1] - s0
        x = pts[:, 0]
        sel = (x >= -m_half) & (x < m_half) & (dt >= lo) & (dt <= hi)
        counts[r] = int(sel.sum())
        area = (2 * m_half / unit) * ((hi - lo + 1) * eps**2)
        dens[r] = counts[r] / area
    tb = float(np.mean([relsep_density_target(S + t, S, U)
                        for t in np.linspace(band[0], band[1], 201)]))
    mid = 0.5 * (band[0] + band[1])
    return RelsepReport(eps, tuple(band), mean_ci(dens), relsep_density_target(mid, S, U), tb,
                        reps, seed.master_seed, counts)


# ---------------------------------------------------------------------------
# Finite graph representation

@dataclass(frozen=True, eq=False)
class GraphEdge:
    src: tuple
    dst: tuple
    branch: str
    lpath: np.ndarray  # leftmost bound, positions at times src_t .. dst_t
    rpath: np.ndarray  # rightmost bound, same times


@dataclass(eq=False)
class FiniteGraphRep:
    S: int
    U: int
    bottom: list
    interior: list
    top: list
    edges: list
    flagged: list = field(default_factory=list)  # bottom both-sites whose two edges share a target

    def out_edges(self, v) -> list:
        return [e for e in self.edges if e.src == v]

    def edge_rows(self):
        for e in self.edges:
            yield {"src_x": e.src[0], "src_t": e.src[1], "dst_x": e.dst[0], "dst_t": e.dst[1],
                   "branch": e.branch}

    def graph_paths(self) -> set:
        """All directed bottom-to-top paths, as tuples of edge indices."""
        by_src = {}
        for i, e in enumerate(self.edges):
            by_src.setdefault(e.src, []).append(i)
        top = set(self.top)
        out = set()

        def walk(v, acc):
            if v in top:
                out.add(tuple(acc))
                return
            for i in by_src.get(v, []):
                walk(self.edges[i].dst, acc + [i])

        for b in self.bottom:
            walk(b, [])
        return out


def _extremal(arrows, w, x, s, U, left):
    """Leftmost or rightmost path from (x, s) up to time U (positions)."""
    pos = [x]
    for t in range(s, U):
        c = arrows[t - w.t_min, x - w.x_min]
        d = _lstep(c) if left else _rstep(c)
        if d == 0:
            raise ValueError("killed site inside the graph window")
        x += d
        if x < w.x_min or x > w.x_max:
            raise ValueError("bounding path left the window; enlarge the margin")
        pos.append(x)
    return np.array(pos, dtype=np.int64)


def _pair_edge(arrows, w, src, y, s0, U, branch):
    l = _extremal(arrows, w, y, s0, U, True)
    r = _extremal(arrows, w, y, s0, U, False)
    if l[-1] == r[-1]:
        k = l.size - 1
    else:
        k = int(np.flatnonzero(l == r)[-1])
    dst = (int(l[k]), s0 + k)
    x0 = src[0]
    return GraphEdge(src, dst, branch, np.concatenate([[x0], l[:k + 1]]),
                     np.concatenate([[x0], r[:k + 1]]))


def finite_graph(net: ArrowField, S: int, U: int, bottom=None) -> FiniteGraphRep:
    """Directed graph on bottom sites, relevant separation points and top sites.

    The bottom layer defaults to the time-S sites whose forward light cone up to
    time U stays inside the window.  Each both-site (bottom or interior) has one
    edge per branch; other bottom sites have a single edge.  An edge follows
    the leftmost and rightmost paths of its branch until their last meeting; if
    they are together at U the target is that top site.
    """
    _check_net(net)
    if S >= U:
        raise ValueError("need S < U")
    w = net.window
    if S < w.t_min or U > w.t_max:
        raise ValueError("[S, U] must lie inside the window")
    h = U - S
    if bottom is None:
        xs = w.sites_at(S)
        xs = xs[(xs - h >= w.x_min) & (xs + h <= w.x_max)]
    else:
        xs = np.asarray(bottom, np.int64)
    if xs.size == 0:
        raise ValueError("window too narrow for a bottom layer")
    arr = net.arrows
    inter = [tuple(map(int, p)) for p in relevant_separation_points(net, S, U, True, reach_from=xs)]
    occ = np.zeros(w.nx, np.bool_)
    occ[xs - w.x_min] = True
    R = reach_matrix(arr, S - w.t_min, occ)
    top = [(int(x), U) for x in np.flatnonzero(R[U - w.t_min]) + w.x_min]
    bottom_v = [(int(x), S) for x in xs]
    edges, flagged = [], []
    for v in bottom_v + inter:
        x, t = v
        c = arr[t - w.t_min, x - w.x_min]
        if c == BOTH:
            e1 = _pair_edge(arr, w, v, x - 1, t + 1, U, "L")
            e2 = _pair_edge(arr, w, v, x + 1, t + 1, U, "R")
            edges += [e1, e2]
            if t == S and e1.dst == e2.dst:
                flagged.append(v)
        elif c in (LEFT, RIGHT):
            d = -1 if c == LEFT else 1
            edges.append(_pair_edge(arr, w, v, x + d, t + 1, U, "L" if d < 0 else "R"))
        else:
            raise ValueError("killed site inside the graph window")
    return FiniteGraphRep(S, U, bottom_v, inter, top, edges, flagged)


def _arrow_paths(arr, w, x, S, U):
    """All arrow-following paths from (x, S) to time U, as position tuples."""
    out = []
    stack = [(x, S, (x,))]
    while stack:
        x, t, acc = stack.pop()
        if t == U:
            out.append(acc)
            continue
        c = arr[t - w.t_min, x - w.x_min]
        if c & 2:
            stack.append((x + 1, t + 1, acc + (x + 1,)))
        if c & 1:
            stack.append((x - 1, t + 1, acc + (x - 1,)))
    return out


def check_finite_graph(net: ArrowField, g: FiniteGraphRep) -> list:
    """Exhaustively verify the graph against brute-force path enumeration.

    Returns a list of violation messages (empty when all properties hold).
    """
    w = net.window
    arr = net.arrows
    S, U = g.S, g.U
    bad = []
    verts = set(g.bottom) | set(g.interior) | set(g.top)
    inter = set(g.interior)
    by_src = {}
    for i, e in enumerate(g.edges):
        by_src.setdefault(e.src, []).append(i)
        if e.dst[1] <= e.src[1]:
            bad.append(f"edge {e.src}->{e.dst} does not go up in time")
        if e.dst not in verts:
            bad.append(f"edge target {e.dst} is not a vertex")
        for v in g.interior:
            if e.src[1] < v[1] < e.dst[1]:
                k = v[1] - e.src[1]
                if e.lpath[k] <= v[0] <= e.rpath[k]:
                    bad.append(f"edge {e.src}->{e.dst} skips interior vertex {v}")
    for v in g.interior:
        out = by_src.get(v, [])
        if len(out) != 2:
            bad.append(f"interior vertex {v} has out-degree {len(out)}")
            continue
        e1, e2 = (g.edges[i] for i in out)
        if e1.dst == e2.dst:
            bad.append(f"interior vertex {v} has two edges to {e1.dst}")
        le, re_ = (e1, e2) if e1.branch == "L" else (e2, e1)
        if not (le.lpath[1] <= le.rpath[1] < re_.lpath[1] <= re_.rpath[1]):
            bad.append(f"interior vertex {v}: bounding pairs out of order")
    for v in g.bottom:
        c = arr[v[1] - w.t_min, v[0] - w.x_min]
        want = 2 if c == BOTH else 1
        if len(by_src.get(v, [])) != want:
            bad.append(f"bottom vertex {v} has out-degree {len(by_src.get(v, []))}")
    # (c): every arrow path induces a graph path bounded by the edge pairs
    induced = set()
    for b in g.bottom:
        for p in _arrow_paths(arr, w, b[0], S, U):
            v, acc, ok = b, [], True
            while v[1] < U:
                cand = by_src.get(v, [])
                step = p[v[1] - S + 1] - v[0]
                br = "L" if step < 0 else "R"
                es = [i for i in cand if g.edges[i].branch == br] if len(cand) == 2 else cand
                if len(es) != 1:
                    bad.append(f"path {p} has no edge out of {v}")
                    ok = False
                    break
                e = g.edges[es[0]]
                seg = np.array(p[v[1] - S: e.dst[1] - S + 1])
                if np.any(seg < e.lpath) or np.any(seg > e.rpath):
                    bad.append(f"path {p} escapes the bounds of edge {e.src}->{e.dst}")
                    ok = False
                    break
                acc.append(es[0])
                v = e.dst
            if ok:
                if v not in set(g.top):
                    bad.append(f"path {p} ends off the top layer at {v}")
                induced.add(tuple(acc))
    # (d): every graph path is realized by some arrow path
    gp = g.graph_paths()
    missing = gp - induced
    extra = induced - gp
    if missing:
        bad.append(f"{len(missing)} graph paths realized by no arrow path")
    if extra:
        bad.append(f"{len(extra)} induced paths absent from the graph")
    return bad


@dataclass(frozen=True)
class FingraphSurvey:
    windows: int
    violations: int
    bad_windows: list  # (index, list of messages)
    n_vertices: int
    n_edges: int
    seed: int

    def rows(self):
        for i, msgs in self.bad_windows:
            for m in msgs:
                yield {"window": i, "violation": m}


def fingraph_survey(n_windows: int = 1000, seed=0, eps_range=(0.1, 0.4), max_height: int = 12,
                    max_bottom: int = 16) -> FingraphSurvey:
    """Build and exhaustively check the finite graph on many small random nets.

    Window i has height h in [2, max_height], an even bottom width in
    [4, max_bottom] and branching probability drawn from eps_range; all three
    come from the window's own generator, so a window is reproducible alone.
    """
    seed = as_seed(seed)
    bad, nv, ne, total = [], 0, 0, 0
    for i in range(n_windows):
        rng = np.random.default_rng([seed.master_seed, seed.stream_id, i])
        h = int(rng.integers(2, max_height + 1))
        bw = 2 * int(rng.integers(2, max_bottom // 2 + 1))
        eps = float(rng.uniform(*eps_range))
        w = LatticeWindow(-bw // 2 - h, bw // 2 + h, 0, h)
        f = gen_net_field(w, eps, seed.replica(i))
        g = finite_graph(f, 0, h)
        msgs = check_finite_graph(f, g)
        nv += len(g.bottom) + len(g.interior) + len(g.top)
        ne += len(g.edges)
        if msgs:
            total += len(msgs)
            bad.append((i, msgs))
    return FingraphSurvey(n_windows, total, bad, nv, ne, seed.master_seed)


# ---------------------------------------------------------------------------
# Potential most recent common ancestors

@njit(cache=True)
def _pmrca_kernel(arrows, R, row_lo, row_hi):
    nt, nx = arrows.shape
    xs = []
    ts = []
    for i in range(max(row_lo, 1), row_hi + 1):
        for j in range(1, nx - 1):
            if not (R[i - 1, j - 1] and (arrows[i - 1, j - 1] & 2)):
                continue
            if not (R[i - 1, j + 1] and (arrows[i - 1, j + 1] & 1)):
                continue
            a = j - 1
            b = j + 1
            k = i - 1
            ok = True
            while k >= 1:
                if a >= b:
                    ok = False
                    break
                # leftmost ancestor of a, rightmost ancestor of b
                if a - 1 >= 0 and R[k - 1, a - 1] and (arrows[k - 1, a - 1] & 2):
                    a -= 1
                elif a + 1 < nx and R[k - 1, a + 1] and (arrows[k - 1, a + 1] & 1):
                    a += 1
                else:
                    ok = False
                    break
                if b + 1 < nx and R[k - 1, b + 1] and (arrows[k - 1, b + 1] & 1):
                    b += 1
                elif b - 1 >= 0 and R[k - 1, b - 1] and (arrows[k - 1, b - 1] & 2):
                    b -= 1
                else:
                    ok = False
                    break
                k -= 1
            if a >= b:  # the ancestors may merge on the bottom row
                ok = False
            if ok:
                xs.append(j)
                ts.append(i)
    out = np.empty((len(xs), 2), np.int64)
    for k in range(len(xs)):
        out[k, 0] = xs[k]
        out[k, 1] = ts[k]
    return out


def pmrca_census(net: ArrowField, horizon: int | None = None, t_min: int = 1) -> np.ndarray:
    """Sites where two arrow paths from time 0, strictly apart before, first meet.

    Paths start from every site of the bottom row of the window.  Returns the
    (x, t) rows with ``t_min <= t - t0 <= horizon``.
    """
    _check_net(net)
    w = net.window
    hz = w.nt - 1 if horizon is None else min(horizon, w.nt - 1)
    occ = np.zeros(w.nx, np.bool_)
    occ[w.sites_at(w.t_min) - w.x_min] = True
    R = reach_matrix(net.arrows, 0, occ)
    pts = _pmrca_kernel(net.arrows, R, t_min, hz)
    pts[:, 0] += w.x_min
    pts[:, 1] += w.t_min
    return pts


@dataclass(frozen=True)
class CensusReport:
    kind: str
    eps: float
    band: tuple
    width: float
    estimate: EstimateCI
    target: float | None
    reps: int
    seed: int


def pmrca_density(kind: str, reps: int, seed, eps: float = 0.0, scale: float = 50,
                  width: float = 10.0, band=(0.25, 1.0)) -> CensusReport:
    """PMRCAs per unit continuum area in a time band, from a bottom row of starts.

    For the web the expected value is the loss rate of the coalescing point
    set, (rho(t1) - rho(t2)) / (t2 - t1) with rho(t) = 1/sqrt(pi t).
    """
    seed = as_seed(seed)
    if kind == "web":
        unit, n_hi = float(scale), web_steps(band[1], scale)
        lo = web_steps(band[0], scale)
    elif kind == "net":
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        unit, n_hi = 1.0 / eps, net_steps(band[1], eps)
        lo = net_steps(band[0], eps)
    else:
        raise ValueError("kind must be 'web' or 'net'")
    _, m_half, half = _layout("net" if kind == "net" else "web", eps, scale, n_hi, width)
    dens = np.empty(reps)
    for r in range(reps):
        wdw = LatticeWindow(-half, half, 0, n_hi)
        f = (gen_web_field(wdw, seed.replica(r)) if kind == "web"
             else gen_net_field(wdw, eps, seed.replica(r)))
        pts = pmrca_census(f, n_hi, t_min=lo)
        sel = (pts[:, 0] >= -m_half) & (pts[:, 0] < m_half)
        area = (2 * m_half / unit) * ((n_hi - lo + 1) / unit**2)
        dens[r] = sel.sum() / area
    target = None
    if kind == "web":
        t1, t2 = lo / unit**2, (n_hi + 1) / unit**2
        target = (web_density_target(t1) - web_density_target(t2)) / (t2 - t1)
    return CensusReport(kind, eps, tuple(band), width, mean_ci(dens), target, reps,
                        seed.master_seed)
