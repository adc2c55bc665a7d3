"""Command-line experiment runner.

    python -m wns <subcommand> [--config FILE] [--out DIR] [--param VALUE ...]

Each run writes ``<out>/<subcommand>.csv`` (first line ``# config: {...}``,
then a header row) and ``<out>/<subcommand>.json`` (schema "wns-report-1").
Precedence: defaults < config file < WNS_SEED / WNS_WORKERS < flags.
Exit status: 0 all tolerances pass, 1 a tolerance fails, 2 malformed
configuration, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

CONFIG_FORMAT = "wns-config-1"
REPORT_SCHEMA = "wns-report-1"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    return [float(v)]


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("1", "true", "yes", "on", "0", "false", "no", "off"):
        return v.lower() in ("1", "true", "yes", "on")
    if isinstance(v, int) and v in (0, 1):
        return bool(v)
    raise ValueError(f"not a boolean: {v!r}")


def _int(v):
    if isinstance(v, bool):
        raise ValueError("boolean given for an integer")
    f = float(v)
    if f != int(f):
        raise ValueError(f"not an integer: {v!r}")
    return int(f)


COMMON = {"seed": (_int, 0), "workers": (_int, 1)}

# name -> {param: (parser, default)}
SCHEMAS = {
    "web-density": {"t": (_floats, [0.5, 1.0, 2.0]), "reps": (_int, 200), "scale": (float, 200.0),
                    "width": (float, 20.0), "tol": (float, 0.05),
                    "source": (str, "web"), "eps": (float, 0.2)},
    "net-density": {"t": (_floats, [0.5, 1.0, 2.0, 8.0]), "eps": (float, 0.02), "reps": (_int, 200),
                    "width": (float, 20.0), "tol": (float, 0.10)},
    "backbone": {"eps": (float, 0.02), "burn_in": (float, 16.0), "width": (float, 40.0),
                 "reps": (_int, 20), "tol": (float, 0.10), "ks_p": (float, 0.01)},
    "relsep-density": {"eps": (float, 0.01), "reps": (_int, 100), "width": (float, 40.0),
                       "tol": (float, 0.15), "band_lo": (float, 0.45), "band_hi": (float, 0.55)},
    "fingraph": {"windows": (_int, 1000), "eps_lo": (float, 0.1), "eps_hi": (float, 0.4),
                 "max_height": (_int, 12), "max_bottom": (_int, 16)},
    "pmrca": {"kind": (str, "web"), "eps": (_floats, [0.01, 0.02, 0.05]), "reps": (_int, 40),
              "scale": (float, 50.0), "width": (float, 10.0), "band_lo": (float, 0.25),
              "band_hi": (float, 1.0)},
    "hw-kernel": {"environments": (_int, 1000), "mu": (str, "uniform"), "half_width": (_int, 8),
                  "steps": (_int, 10), "tol": (float, 1e-10)},
    "hw-npoint": {"mu": (str, "uniform"), "n_max": (_int, 3), "reps": (_int, 100000),
                  "tol": (float, 1e-12), "sigmas": (float, 3.0)},
    "hw-stationary": {"a": (float, 1.0), "eps": (float, 0.01), "t_burn": (float, 8.0),
                      "width": (float, 50.0), "reps": (_int, 4), "u": (_floats, [0.1, 0.5, 1.0]),
                      "tol": (float, 0.15)},
    "sticky-pair": {"L0": (float, 0.0), "R0": (float, 0.0), "T": (float, 1.0), "dt": (float, 1e-3),
                    "reps": (_int, 2000), "substeps": (_int, 8), "sigmas": (float, 3.0),
                    "z_min": (float, 5.0)},
    "sticky-npoint": {"n": (_int, 2), "beta": (float, 0.0), "nu_atom": (float, 0.5),
                      "nu_mass": (float, 1.0), "T": (float, 0.4), "eps": (float, 0.01),
                      "dt_report": (float, 0.005), "reps": (_int, 8000), "t_slope": (float, 0.2),
                      "cov_tol": (float, 0.10), "slope_tol": (float, 0.20), "dump_paths": (_bool, False)},
    "meeting-tail": {"reps": (_int, 100000), "horizon": (_int, 100000), "n_lo": (float, 1e2),
                     "n_hi": (float, 1e5), "tol": (float, 0.05)},
    "tsaw": {"n_max": (_int, 1000000), "seeds": (_int, 200), "lo": (float, 0.61), "hi": (float, 0.72),
             "srw_lo": (float, 0.45), "srw_hi": (float, 0.55), "profile_n": (_int, 10000),
             "profile_seeds": (_int, 100)},
    "selftest": {},
}
RESERVED = {"subcommand", "format", "output"}


def default_config(sub: str) -> dict:
    d = {k: v[1] for k, v in {**COMMON, **SCHEMAS[sub]}.items()}
    return d


def validate(sub: str, raw: dict) -> dict:
    if sub not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {sub!r}")
    schema = {**COMMON, **SCHEMAS[sub]}
    out = {}
    for k, v in raw.items():
        if k in RESERVED:
            continue
        if k not in schema:
            raise ConfigError(f"unknown key {k!r} for {sub}")
        try:
            out[k] = schema[k][0](v)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {k!r}: {e}") from None
    return out


def load_config(path: str) -> dict:
    """A JSON config, a JSON report (its echoed config) or a CSV output (its header line)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith("# config: "):
        text = text.splitlines()[0][len("# config: "):]
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    if obj.get("schema") == REPORT_SCHEMA and "config" in obj:
        obj = obj["config"]
    fmt = obj.get("format", CONFIG_FORMAT)
    if fmt != CONFIG_FORMAT:
        raise ConfigError(f"unsupported config format {fmt!r}")
    return obj


def resolve_config(sub: str, file_cfg: dict | None, flags: dict, env=os.environ) -> dict:
    cfg = default_config(sub)
    if file_cfg:
        if file_cfg.get("subcommand", sub) != sub:
            raise ConfigError(f"config is for {file_cfg['subcommand']!r}, not {sub!r}")
        cfg.update(validate(sub, file_cfg))
    if "WNS_SEED" in env:
        cfg["seed"] = validate(sub, {"seed": env["WNS_SEED"]})["seed"]
    if "WNS_WORKERS" in env:
        cfg["workers"] = validate(sub, {"workers": env["WNS_WORKERS"]})["workers"]
    cfg.update(validate(sub, flags))
    if cfg["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    return cfg


# ---------------------------------------------------------------------------
# Replica partitioning

def partition(reps: int, workers: int) -> list:
    """Contiguous (first, count) blocks by replica index."""
    workers = max(1, min(workers, reps))
    base, extra = divmod(reps, workers)
    out, first = [], 0
    for w in range(workers):
        c = base + (w < extra)
        out.append((first, c))
        first += c
    return out


def _density_block(args):
    from .paths import density_samples
    kind, ts, first, count, seed, eps, scale, width = args
    return density_samples(kind, ts, count, seed, eps, scale, width, first)


def _run_blocks(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------------------
# Subcommands: each returns (rows, summary, passed)

def run_web_density(c):
    from .paths import density_from_samples
    kind = {"web": "web", "net": "web_in_net"}.get(c["source"])
    if kind is None:
        raise ConfigError("source must be 'web' or 'net'")
    if c["reps"] < 2:
        raise ConfigError("reps must be at least 2")
    jobs = [(kind, c["t"], f, n, c["seed"], c["eps"], c["scale"], c["width"])
            for f, n in partition(c["reps"], c["workers"])]
    dens = np.concatenate(_run_blocks(_density_block, jobs, c["workers"]))
    est = density_from_samples(kind, c["t"], dens, c["seed"], c["eps"], c["scale"])
    rows = [{**e.row(), "target": e.target, "rel_err": e.rel_err} for e in est]
    ok = all(e.rel_err <= c["tol"] for e in est)
    return rows, {"targets": [e.target for e in est], "rel_errs": [e.rel_err for e in est]}, ok


def run_net_density(c):
    from .paths import density_from_samples
    if c["reps"] < 2:
        raise ConfigError("reps must be at least 2")
    jobs = [("net", c["t"], f, n, c["seed"], c["eps"], 1.0, c["width"])
            for f, n in partition(c["reps"], c["workers"])]
    dens = np.concatenate(_run_blocks(_density_block, jobs, c["workers"]))
    est = density_from_samples("net", c["t"], dens, c["seed"], c["eps"])
    rows = [{**e.row(), "target": e.target, "rel_err": e.rel_err} for e in est]
    ok = all(e.rel_err <= c["tol"] for e in est)
    return rows, {"targets": [e.target for e in est], "rel_errs": [e.rel_err for e in est]}, ok


def run_backbone(c):
    from .paths import backbone_density
    r = backbone_density(c["eps"], c["burn_in"], c["width"], c["reps"], c["seed"],
                         require_plateau=False)
    rel = r.density.rel_err(2.0)
    ok = rel <= c["tol"] and r.ks.pvalue > c["ks_p"] and r.plateau
    rows = [{"time": "half", **r.density_half.to_dict()}, {"time": "end", **r.density.to_dict()}]
    return rows, {**r.to_dict(), "target": 2.0, "rel_err": rel}, ok


def run_relsep(c):
    from .coupling import relsep_density
    r = relsep_density(c["eps"], c["reps"], c["seed"], c["width"], (c["band_lo"], c["band_hi"]))
    rows = [{"replica": i, "count": int(k)} for i, k in enumerate(r.counts)]
    summ = {"estimate": r.estimate.to_dict(), "target": r.target, "target_band": r.target_band,
            "rel_err": r.rel_err}
    return rows, summ, r.rel_err <= c["tol"]


def run_fingraph(c):
    from .coupling import fingraph_survey
    r = fingraph_survey(c["windows"], c["seed"], (c["eps_lo"], c["eps_hi"]), c["max_height"],
                        c["max_bottom"])
    rows = list(r.rows()) or [{"window": -1, "violation": ""}]
    summ = {"windows": r.windows, "violations": r.violations, "vertices": r.n_vertices,
            "edges": r.n_edges}
    return rows, summ, r.violations == 0


def run_pmrca(c):
    from .coupling import pmrca_density
    band = (c["band_lo"], c["band_hi"])
    rows = []
    if c["kind"] == "web":
        a = pmrca_density("web", c["reps"], c["seed"], scale=c["scale"], width=c["width"], band=band)
        b = pmrca_density("web", c["reps"], c["seed"], scale=c["scale"], width=2 * c["width"],
                          band=band)
        for w, r in ((c["width"], a), (2 * c["width"], b)):
            rows.append({"kind": "web", "eps": 0.0, "width": w, **r.estimate.to_dict(),
                         "target": r.target})
        overlap = not (a.estimate.ci_hi < b.estimate.ci_lo or b.estimate.ci_hi < a.estimate.ci_lo)
        finite = all(math.isfinite(r.estimate.mean) for r in (a, b))
        summ = {"window_stable": overlap, "locally_finite": finite, "target": a.target,
                "target_in_ci": a.estimate.contains(a.target)}
        return rows, summ, overlap and finite
    if c["kind"] != "net":
        raise ConfigError("kind must be 'web' or 'net'")
    for e in c["eps"]:
        r = pmrca_density("net", c["reps"], c["seed"], eps=e, width=c["width"], band=band)
        rows.append({"kind": "net", "eps": e, "width": c["width"], **r.estimate.to_dict(),
                     "target": ""})
    return rows, {"exploratory": True}, True


def _mu_by_name(name):
    from .mu import MuSpec
    table = {"uniform": lambda: MuSpec.uniform(), "beta22": lambda: MuSpec.beta(2.0, 2.0),
             "coin": MuSpec.coin, "half": lambda: MuSpec.delta(0.5)}
    if name not in table:
        raise ConfigError(f"mu must be one of {sorted(table)}")
    return table[name]()


def run_hw_kernel(c):
    from .hw import compose, kernel
    from .lattice import LatticeWindow, gen_environment
    from .rng import SeedSpec
    mu = _mu_by_name(c["mu"])
    h, n = c["half_width"], c["steps"]
    if n < 2:
        raise ConfigError("steps must be at least 2")
    w = LatticeWindow(-h - n, h + n, 0, n)
    worst_row = worst_ck = 0.0
    rows = []
    for i in range(c["environments"]):
        env = gen_environment(w, mu, SeedSpec(c["seed"], i))
        x0 = [x for x in w.sites_at(0) if -h <= x <= h]
        k_all = kernel(env, 0, n, x0)
        worst_row = max(worst_row, float(np.max(np.abs(k_all.row_sums() - 1.0))))
        m = n // 2
        a = kernel(env, 0, m, x0)
        b = kernel(env, m, n, a.targets)
        worst_ck = max(worst_ck, float(np.max(np.abs(compose(a, b).P - k_all.P))))
        if i == 0:
            rows = list(k_all.rows())
    summ = {"max_row_sum_error": worst_row, "max_chapman_kolmogorov_error": worst_ck}
    return rows, summ, worst_row <= c["tol"] and worst_ck <= c["tol"]


def run_hw_npoint(c):
    from .hw import npoint_kernel
    mu = _mu_by_name(c["mu"])
    rows, ok = [], True
    for n in range(1, c["n_max"] + 1):
        target = mu.moment(n, 0)
        ex = npoint_kernel(mu, n, 1, "exact").prob([1] * n)
        mc = npoint_kernel(mu, n, 1, "monte_carlo", reps=c["reps"], seed=c["seed"])
        p = mc.prob([1] * n)
        se = math.sqrt(max(target * (1 - target), 1e-300) / c["reps"])
        z = (p - target) / se if se > 0 else 0.0
        ok &= abs(ex - target) <= c["tol"] and abs(z) <= c["sigmas"]
        rows.append({"n": n, "moment": target, "exact": ex, "monte_carlo": p, "z": z})
    return rows, {"mu": c["mu"]}, ok


def run_hw_stationary(c):
    from .hw import stationary_atoms
    r = stationary_atoms(c["a"], c["eps"], c["t_burn"], c["width"], c["reps"], c["seed"], c["u"])
    rows = list(r.rows())
    errs = r.rel_errs()
    summ = {**r.to_dict(), "rel_errs": errs, "rel_errs_pair": r.rel_errs("pair")}
    return rows, summ, all(e <= c["tol"] for e in errs)


def run_sticky_pair(c):
    from .sticky import sticky_pair
    r = sticky_pair(c["L0"], c["R0"], c["T"], c["dt"], c["reps"], c["seed"], c["substeps"],
                    strict=False)
    T = c["T"]
    zl = (r.drift_L.mean + T) / r.drift_L.std_err
    zr = (r.drift_R.mean - T) / r.drift_R.std_err
    ok = (abs(zl) <= c["sigmas"] and abs(zr) <= c["sigmas"] and r.skorohod_violations == 0
          and r.ordering_violations == 0)
    if c["L0"] == c["R0"]:
        ok &= r.z_positive() >= c["z_min"]
    rows = [{"replica": i, "D_T": float(d)} for i, d in enumerate(r.D_T)]
    return rows, {**r.to_dict(), "z_drift_L": zl, "z_drift_R": zr,
                  "z_together": r.z_positive()}, ok


def run_sticky_npoint(c):
    from .mu import FiniteMeasure, beta_plus
    from .sticky import check_covariation, max_slope, npoint_sticky
    nu = (FiniteMeasure.delta(c["nu_atom"], c["nu_mass"]) if c["nu_mass"] > 0
          else FiniteMeasure.zero())
    ens = npoint_sticky(c["n"], c["beta"], nu, c["T"], c["eps"], c["dt_report"], c["reps"],
                        c["seed"])
    ok = True
    summ = {}
    if c["n"] >= 2:
        cov = check_covariation(ens)
        off = [(p, r) for p, r in zip(cov.pairs, cov.rel_diff) if p[0] != p[1]]
        summ["covariation"] = [{"pair": list(p), "cov": cv.mean, "coinc": co.mean, "rel_diff": rd}
                               for p, cv, co, rd in zip(cov.pairs, cov.covariation,
                                                        cov.coincidence, cov.rel_diff)]
        ok &= all(abs(r) <= c["cov_tol"] for _, r in off if math.isfinite(r))
        target = beta_plus(c["beta"], nu, c["n"])
        s = max_slope(ens, c["t_slope"], target)
        summ["max_slope"] = {"slope": s.slope, "stderr": s.stderr, "target": target,
                             "rel_err": s.rel_err, "ratio": s.ratio}
        ok &= s.rel_err <= c["slope_tol"]
    if c["dump_paths"]:
        rows = list(ens.rows())
    else:
        t = ens.times
        rows = [{"t": float(t[k]), "walker": i, "mean_x": float(ens.x[:, i, k].mean()),
                 "var_x": float(ens.x[:, i, k].var())} for k in range(t.size) for i in range(ens.n)]
    return rows, summ, ok


def run_meeting_tail(c):
    from .paths import meeting_time_samples, survival_curve
    from .stats import loglog_slope
    taus = meeting_time_samples(c["reps"], c["horizon"], c["seed"])
    ns = np.unique(np.round(np.logspace(math.log10(c["n_lo"]), math.log10(c["n_hi"]), 13)))
    ns = ns[ns <= c["horizon"]]
    sv = survival_curve(taus, ns)
    fit = loglog_slope(ns, sv)
    rows = [{"n": int(n), "survival": float(p)} for n, p in zip(ns, sv)]
    ok = abs(fit.slope + 0.5) <= c["tol"]
    return rows, {"slope": fit.slope, "stderr": fit.stderr, "target": -0.5}, ok


def run_tsaw(c):
    from .rng import SeedSpec
    from .tsaw import profile_check, run_tsaw as _run, scaling_exponent
    t = scaling_exponent(c["n_max"], c["seeds"], c["seed"])
    s = scaling_exponent(c["n_max"], c["seeds"], c["seed"], walk="srw")
    bad = 0
    for i in range(c["profile_seeds"]):
        r = _run(c["profile_n"], seed=SeedSpec(c["seed"], i), record=False)
        bad += not profile_check(r.state).ok
    rows = [{"walk": "tsaw", **row} for row in t.rows()] + [{"walk": "srw", **row} for row in s.rows()]
    ok = (c["lo"] <= t.slope <= c["hi"]) and (c["srw_lo"] <= s.slope <= c["srw_hi"]) and bad == 0
    return rows, {"tsaw": t.to_dict(), "srw": s.to_dict(), "trend_toward_2/3": t.trend_toward(),
                  "profile_failures": bad}, ok


def run_selftest(c):
    from . import selftest
    results = selftest.run_all()
    rows = [{"check": name, "passed": ok, "detail": msg} for name, ok, msg in results]
    return rows, {"checks": len(results), "failed": sum(not ok for _, ok, _ in results)}, all(
        ok for _, ok, _ in results)


RUNNERS = {
    "web-density": run_web_density, "net-density": run_net_density, "backbone": run_backbone,
    "relsep-density": run_relsep, "fingraph": run_fingraph, "pmrca": run_pmrca,
    "hw-kernel": run_hw_kernel, "hw-npoint": run_hw_npoint, "hw-stationary": run_hw_stationary,
    "sticky-pair": run_sticky_pair, "sticky-npoint": run_sticky_npoint,
    "meeting-tail": run_meeting_tail, "tsaw": run_tsaw, "selftest": run_selftest,
}


# ---------------------------------------------------------------------------
# Output

def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        o = float(o)
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def echo(sub: str, cfg: dict) -> dict:
    return {"format": CONFIG_FORMAT, "subcommand": sub, **cfg}


def csv_text(rows: list, cfg_echo: dict) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_jsonable(cfg_echo), sort_keys=True) + "\n")
    if rows:
        fields = list(rows[0])
        for r in rows[1:]:
            fields += [k for k in r if k not in fields]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})
    return buf.getvalue()


def run(sub: str, cfg: dict, out_dir: str | Path) -> int:
    rows, summary, ok = RUNNERS[sub](cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ce = echo(sub, cfg)
    (out / f"{sub}.csv").write_text(csv_text(rows, ce), encoding="utf-8", newline="")
    report = {"schema": REPORT_SCHEMA, "subcommand": sub, "config": ce, "passed": bool(ok),
              "summary": summary}
    (out / f"{sub}.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True)
                                     + "\n", encoding="utf-8")
    print(f"{sub}: {'PASS' if ok else 'FAIL'} -> {out / (sub + '.csv')}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wns", description=__doc__.splitlines()[0])
    sp = p.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        q = sp.add_parser(name)
        q.add_argument("--config", help="JSON config, JSON report or CSV output to rerun")
        q.add_argument("--out", default=".", help="output directory")
        for k, (_, d) in {**COMMON, **schema}.items():
            q.add_argument(f"--{k}", dest=f"p_{k}", default=None,
                           help=f"default: {d}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:  # argparse reports malformed input with status 2
        return int(e.code) if e.code is not None else EXIT_CONFIG
    sub = ns.subcommand
    flags = {k[2:]: v for k, v in vars(ns).items() if k.startswith("p_") and v is not None}
    try:
        file_cfg = load_config(ns.config) if ns.config else None
        cfg = resolve_config(sub, file_cfg, flags)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(sub, cfg, ns.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001 - reported as an internal error
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
