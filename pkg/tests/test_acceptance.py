"""Acceptance suite: every criterion at its stated tolerance.

Each test prints (and records for the terminal summary) one line
``CRITERION <k> PASS|FAIL: <detail>``.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE
from wns import cli
from wns.coupling import (fingraph_survey, pmrca_density, relsep_density, resolve_law,
                          site_law, switch_law)
from wns.hw import stationary_atoms
from wns.paths import backbone_density, density_curve, psi

SEED = 20240


def _report(k, ok, detail):
    line = f"CRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def _cfg(sub, **kw):
    return cli.resolve_config(sub, None, {"seed": SEED, **kw}, env={})


def _errs(est):
    return ", ".join(f"t={e.t:g}: {e.estimate.mean:.4f} vs {e.target:.4f} ({e.rel_err:.1%})"
                     for e in est)


def test_01_web_density():
    t0 = time.time()
    est = density_curve("web", [0.5, 1.0, 2.0], 200, SEED, scale=200, width=20.0)
    dt = time.time() - t0
    ok = all(e.rel_err <= 0.05 for e in est) and dt < 60 * 3
    _report(1, ok, f"{_errs(est)}; {dt:.0f}s for 3 times")


def test_02_net_density():
    t0 = time.time()
    est = density_curve("net", [0.5, 1.0, 2.0, 8.0], 200, SEED, eps=0.02, scale=1.0,
                        width=20.0)
    dt = time.time() - t0
    ok = all(e.rel_err <= 0.10 for e in est) and abs(est[-1].estimate.mean - 2) <= 0.2
    ok &= dt < 300
    _report(2, ok, f"{_errs(est)}; {dt:.0f}s")


def test_03_backbone():
    r = backbone_density(0.02, 16.0, 40.0, 20, SEED, require_plateau=False)
    rel = r.density.rel_err(2.0)
    ok = rel <= 0.10 and r.ks.pvalue > 0.01
    _report(3, ok, f"density {r.density.mean:.3f} (target 2, {rel:.1%}), gap KS p={r.ks.pvalue:.3f}, "
                   f"{r.n_gaps} gaps, plateau={r.plateau}")


def test_04_relevant_separation():
    r = relsep_density(0.01, 100, SEED, width=40.0, band=(0.45, 0.55))
    ok = r.rel_err <= 0.15
    _report(4, ok, f"eps=0.01: {r.estimate.mean:.3f} +- {r.estimate.std_err:.3f} vs "
                   f"2 psi(0.5)^2 = {r.target:.3f} ({r.rel_err:.1%}); band average "
                   f"{r.target_band:.3f}")


def test_05_finite_graph():
    t0 = time.time()
    s = fingraph_survey(1000, SEED)
    _report(5, s.violations == 0,
            f"{s.windows} windows, {s.n_vertices} vertices, {s.n_edges} edges, "
            f"{s.violations} violations, {time.time() - t0:.0f}s")


def test_06_coupling():
    exact = True
    for eps in (Fraction(0), Fraction(1, 100), Fraction(1, 50), Fraction(1, 5), Fraction(1)):
        net, web = site_law("net", eps), site_law("web")
        exact &= resolve_law(net) == web and switch_law(web, eps) == net
        exact &= sum(net.values()) == 1
    est = density_curve("web_in_net", [0.5, 1.0, 2.0], 200, SEED, eps=0.2, scale=200,
                        width=20.0)
    ok = exact and all(e.rel_err <= 0.05 for e in est)
    _report(6, ok, f"per-site round trips exact={exact}; web resolved from a net: {_errs(est)}")


def test_07_kernels():
    rows, s, ok = cli.run_hw_kernel(_cfg("hw-kernel", environments=1000))
    _report(7, ok, f"1000 environments: max row-sum error {s['max_row_sum_error']:.2e}, "
                   f"max Chapman-Kolmogorov error {s['max_chapman_kolmogorov_error']:.2e}")


@pytest.mark.parametrize("mu", ["uniform", "beta22", "coin", "half"])
def test_08_moment_identity(mu):
    rows, _, ok = cli.run_hw_npoint(_cfg("hw-npoint", mu=mu))
    detail = "; ".join(f"n={r['n']}: exact {r['exact']:.6f} = {r['moment']:.6f}, MC z={r['z']:+.2f}"
                       for r in rows)
    _report(f"8{'abcd'['uniform beta22 coin half'.split().index(mu)]}", ok, f"mu={mu}: {detail}")


def test_09_martingale_problem():
    rows, s, ok = cli.run_sticky_npoint(_cfg("sticky-npoint"))
    cv = [c for c in s["covariation"] if c["pair"][0] != c["pair"][1]][0]
    m = s["max_slope"]
    _report(9, ok, f"covariation {cv['cov']:.4f} vs coincidence {cv['coinc']:.4f} "
                   f"({cv['rel_diff']:+.1%}); max slope {m['slope']:.3f} +- {m['stderr']:.3f} vs "
                   f"beta_+(2) = {m['target']:.1f} ({m['rel_err']:.1%}), ratio {m['ratio']:.3f}")


def test_10_sticky_pair():
    rows, s, ok = cli.run_sticky_pair(_cfg("sticky-pair"))
    _report(10, ok, f"drift z: L {s['z_drift_L']:+.2f}, R {s['z_drift_R']:+.2f}; Skorohod "
                    f"violations {s['skorohod_violations']}; time together "
                    f"{s['together_fraction']['mean']:.4f}, z={s['z_together']:.1f}")


def _atoms_detail(r, which):
    ref = r.predicted if which == "predicted" else r.predicted_pair
    return ", ".join(f"u={u:g}: {e.mean:.3f} vs {p:.3f} ({abs(e.mean - p) / p:.0%})"
                     for u, e, p in zip(r.us, r.empirical, ref))


def test_11_stationary_law():
    # as stated: Beta(2 eps, 2 eps) environment against E1(u); see the decisions ledger
    t0 = time.time()
    r = stationary_atoms(1.0, 0.01, 8.0, 50.0, 4, SEED)
    dt = time.time() - t0
    ok = all(e <= 0.15 for e in r.rel_errs()) and dt < 600
    _report(11, ok, f"a=1, eps=0.01: {_atoms_detail(r, 'predicted')}; {dt:.0f}s")


@pytest.fixture(scope="module")
def atoms_a1():
    return stationary_atoms(1.0, 0.02, 8.0, 250.0, 4, SEED)


def test_11b_stationary_law_half_rate():
    # Beta(eps, eps), whose pair chain gives the E1(u) law
    r = stationary_atoms(0.5, 0.02, 8.0, 250.0, 4, SEED)
    ok = all(e <= 0.15 for e in r.rel_errs("pair"))
    _report("11b", ok, f"a=1/2 against E1(u): {_atoms_detail(r, 'pair')}")


def test_11c_stationary_law_pair_scale(atoms_a1):
    r = atoms_a1
    ok = all(e <= 0.15 for e in r.rel_errs("pair"))
    _report("11c", ok, f"a=1 against 2 E1(2u): {_atoms_detail(r, 'pair')}")


def test_11d_second_moment_exact(atoms_a1):
    r = atoms_a1
    z = (r.second_moment.mean - r.second_moment_exact) / r.second_moment.std_err
    ok = abs(z) <= 3 and abs(r.mass_per_length.mean - 1) < 1e-9
    _report("11d", ok, f"sum of squared masses {r.second_moment.mean:.4f} +- "
                       f"{r.second_moment.std_err:.4f} vs exact {r.second_moment_exact:.4f} "
                       f"(z={z:+.2f}); mass per length {r.mass_per_length.mean:.12f}")


def test_12_meeting_tail():
    rows, s, ok = cli.run_meeting_tail(_cfg("meeting-tail"))
    _report(12, ok, f"slope {s['slope']:.4f} +- {s['stderr']:.4f} (target -0.5 +- 0.05)")


def test_13_tsaw():
    rows, s, ok = cli.run_tsaw(_cfg("tsaw"))
    t, w = s["tsaw"], s["srw"]
    _report(13, ok, f"area/profile failures {s['profile_failures']}; exponent {t['slope']:.4f} "
                    f"(half range {t['slope_half']:.4f}) in [0.61, 0.72]; control "
                    f"{w['slope']:.4f} in [0.45, 0.55]")


def test_14_pmrca():
    rows, s, ok_web = cli.run_pmrca(_cfg("pmrca", kind="web"))
    rows_net, _, ok_net = cli.run_pmrca(_cfg("pmrca", kind="net"))
    net = ", ".join(f"eps={r['eps']:g}: {r['mean']:.2f} +- {r['std_err']:.2f}" for r in rows_net)
    web = ", ".join(f"width {r['width']:g}: {r['mean']:.3f} [{r['ci_lo']:.3f}, {r['ci_hi']:.3f}]"
                    for r in rows)
    ok = ok_web and ok_net and all(math.isfinite(r["mean"]) for r in rows_net)
    _report(14, ok, f"web {web} (loss-rate value {s['target']:.3f}); net exploratory: {net}")
