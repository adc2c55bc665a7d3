"""Exact identities that must hold for any seed; run by ``wns selftest``."""
from __future__ import annotations

import math

import numpy as np

from .hw import compose, kernel, npoint_kernel
from .lattice import (BOTH, LEFT, NONE, RIGHT, LatticeWindow, from_bytes, from_json,
                      gen_environment, gen_net_field, gen_web_field, to_bytes, to_json)
from .coupling import sample_web_in_net, switch_web_to_net
from .mu import FiniteMeasure, MuSpec, beta_plus, check_mucon, mu_eps_net
from .rng import SeedSpec
from .stats import loglog_slope, mean_ci
from .sticky import check_covariation, npoint_sticky, solve_left_right
from .tsaw import default_l0, profile_check, run_tsaw

_W = LatticeWindow(-12, 12, 0, 10)


def _stats():
    c = mean_ci([3.0] * 5)
    x = np.array([1.0, 2.0, 4.0, 8.0])
    return (c.ci_lo == c.ci_hi == 3.0 and abs(loglog_slope(x, x**2).slope - 2) < 1e-12
            and abs(loglog_slope(x, 5 / np.sqrt(x)).slope + 0.5) < 1e-12), "CI and slopes"


def _net_eps0_is_web():
    s = SeedSpec(11, 2)
    a, b = gen_web_field(_W, s), gen_net_field(_W, 0.0, s)
    return bool(np.array_equal(a.arrows, b.arrows)), "eps = 0 net equals web"


def _serialization():
    s = SeedSpec(5, 1)
    ok = True
    for f in (gen_web_field(_W, s), gen_net_field(_W, 0.3, s),
              gen_environment(_W, MuSpec.uniform(), s)):
        g, h = from_bytes(to_bytes(f)), from_json(to_json(f))
        for o in (g, h):
            if hasattr(f, "arrows"):
                ok &= bool(np.array_equal(o.arrows, f.arrows)) and o.kind == f.kind
            else:
                ok &= bool(np.array_equal(o.omega, f.omega))
    return ok, "bytes and JSON round trips"


def _coupling_sitewise():
    s = SeedSpec(3, 0)
    net = gen_net_field(_W, 0.4, s)
    web, _ = sample_web_in_net(net, "fair", s)
    m = _W.mask()
    both = (net.arrows == BOTH) & m
    keep = np.array_equal(web.arrows[m & ~both], net.arrows[m & ~both])
    single = np.all(np.isin(web.arrows[both], (LEFT, RIGHT)))
    up = switch_web_to_net(web, 0.3, s)
    mono = np.all((up.arrows[m] == web.arrows[m]) | (up.arrows[m] == BOTH))
    return bool(keep and single and mono), "web in net keeps single arrows; switching only adds both-sites"


def _kernels():
    env = gen_environment(_W, MuSpec.uniform(), SeedSpec(7, 0))
    x0 = [0, 2]
    k0 = kernel(env, 4, 4, x0)
    ident = np.allclose(k0.P[:, np.searchsorted(k0.targets, x0)], np.eye(2))
    full = kernel(env, 0, 8, x0)
    a = kernel(env, 0, 3, x0)
    b = kernel(env, 3, 8, a.targets)
    ck = np.max(np.abs(compose(a, b).P - full.P)) < 1e-12
    rows = np.max(np.abs(full.row_sums() - 1)) < 1e-12
    om = env.at(0, 0)
    one = kernel(env, 0, 1, [0])
    step = abs(one.prob(0, 1) - om) < 1e-15 and abs(one.prob(0, -1) - (1 - om)) < 1e-15
    return bool(ident and ck and rows and step), "identity, one step, Chapman-Kolmogorov, rows"


def _moments():
    u = MuSpec.uniform()
    p2 = npoint_kernel(u, 2, 1, "exact").prob([1, 1])
    coin = npoint_kernel(MuSpec.coin(), 2, 6, "exact")
    together = all(s[0] == s[1] for s, p in zip(coin.states, coin.probs) if p > 0)
    two = npoint_kernel(MuSpec.beta(2, 2), 2, 4, "exact")
    one = npoint_kernel(MuSpec.beta(2, 2), 1, 4, "exact")
    marg = two.marginal([0])
    cons = all(abs(marg.get((int(s[0]),), 0.0) - p) < 1e-12 for s, p in zip(one.states, one.probs))
    return abs(p2 - 1 / 3) < 1e-12 and together and cons, "E[w^2] = 1/3, coin coalesces, consistency"


def _beta_plus():
    half = FiniteMeasure.delta(0.5)
    z = FiniteMeasure.zero()
    ok = all(beta_plus(0.7, z, m) == 0.7 for m in range(1, 5))
    ok &= abs(beta_plus(0.0, half, 2) - 2) < 1e-12 and abs(beta_plus(0.0, half, 3) - 3) < 1e-12
    ok &= abs(beta_plus(1.5, half, 3) - beta_plus(0.0, half, 3) - 1.5) < 1e-12
    rep = check_mucon(lambda e: mu_eps_net(0.3, half, e), [0.01, 0.02, 0.04])
    ok &= abs(rep.beta_limit - 0.3) < 1e-9
    return bool(ok), "drift identities and beta_hat"


def _tsaw():
    l0 = default_l0(3)  # edges -3..2
    ok = list(l0) == [1, 0, 1, 1, 0, 1]
    r = run_tsaw(0)
    ok &= profile_check(r.state).ok
    r = run_tsaw(2000, seed=4)
    ok &= r.state.area() == 2000 and profile_check(r.state).ok
    lt = np.array([0, 3, 5, 0], np.int64)  # edges -2..1, walker at 0 sees 3 (left) and 5 (right)
    step = run_tsaw(1, lt, offset=2, record=True)
    ok &= int(step.trajectory[1]) == -1
    return bool(ok), "initial profile, area identity, strict repulsion"


def _sticky():
    sol = solve_left_right(0.0, 0.0, 1.0, 0.01, seed=1)
    ok = not sol.skorohod_violations() and np.all(sol.D >= 0)
    ens = npoint_sticky(2, 0.0, FiniteMeasure.delta(0.5), T=0.1, eps=0.05, dt_report=0.05,
                        reps=20, seed=1)
    cov = check_covariation(ens, pairs=[(0, 0), (1, 1)])
    ok &= all(abs(c.mean - cov.t) < 1e-12 for c in cov.covariation)
    return bool(ok), "Skorohod identities, <X_i, X_i>(t) = t"


CHECKS = [("stats", _stats), ("net_eps0_is_web", _net_eps0_is_web),
          ("serialization", _serialization), ("coupling_sitewise", _coupling_sitewise),
          ("kernels", _kernels), ("moments", _moments), ("beta_plus", _beta_plus),
          ("tsaw", _tsaw), ("sticky", _sticky)]


def run_all() -> list:
    out = []
    for name, fn in CHECKS:
        try:
            ok, msg = fn()
        except Exception as e:  # noqa: BLE001 - a crash is a failed check
            ok, msg = False, f"{type(e).__name__}: {e}"
        out.append((name, bool(ok), msg))
    return out
