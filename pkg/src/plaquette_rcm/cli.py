"""Command-line front end.

Subcommands: sample, sweep, lambda, wilson, sw-run, verify.  Settings come
from built-in defaults, then an optional flat JSON file (--config), then
flags, later sources winning.  Exit codes: 0 ok, 1 usage, 2 a check
failed, 3 no convergence.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from . import rcm
from .cubical import build_box, build_grid, build_torus
from .duality import p_sd, termwise_ratio_check, verify_duality, verify_partition_duality
from .homology import Subcomplex, alexander_check, betti, euler_poincare_check, eta_offset_constant
from .pltg import (SwendsenWangChain, area_perimeter_scan, centered_square, coupling_marginal_check,
                   exact_gibbs, fit_rates, hamiltonian, loop_vector, p_to_beta, beta_to_p,
                   rate_spread, sw_transition_matrix, wilson_identity_check, LoopSpec)
from .rcm import ChainSettings, RcmParams, RNG_NAME, estimate_event

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_NOCONV = 0, 1, 2, 3

DEFAULTS = {
    "geometry": "torus", "d": 2, "N": 8, "n": 4, "boundary": "free",
    "p": None, "beta": None, "q": 2.0, "i": 1, "q_field": None, "balanced": False,
    "n_samples": 1000, "burn_in": 1000, "thin": 10, "n_chains": 1, "seed": 0, "sampler": "auto",
    "events": "A,S", "p_min": 0.0, "p_max": 1.0, "steps": 11,
    "target": 0.5, "tol": 0.005, "max_iter": 20, "p_lo": 0.0, "p_hi": 1.0, "z": 2.0, "max_doublings": 2,
    "sizes": "2,3,4,5", "ps": None, "loop_size": None,
    "out": None, "json_out": None, "emit_plot_script": None,
    "duality": False, "partition": False, "alexander": False, "coupling": False,
    "sw_stationarity": False, "inject_fault": False, "n_random": 100,
}

CSV_COLUMNS = ["p", "q", "i", "d", "N", "boundary", "event", "estimate", "stderr", "n_samples", "seed"]


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# Output helpers.

OUTPUT_KEYS = ("config", "out", "json_out", "emit_plot_script")


def metadata(cfg, command):
    # output paths are left out so that reruns into other files are byte-identical
    return {"command": command, "version": __version__, "rng": RNG_NAME,
            "config": {k: cfg[k] for k in sorted(cfg) if k not in OUTPUT_KEYS}}


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, meta, columns, rows):
    """RFC-4180 CSV (CRLF, header row) preceded by '# ' metadata lines."""
    buf = io.StringIO(newline="")
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    _emit(path, buf.getvalue())


def write_json(path, obj):
    _emit(path, json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x)}")


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


PLOT_TEMPLATE = '''"""Plot stub for {csv}."""
import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv({csv!r}, comment="#")
x, ys = {x!r}, {ys!r}
fig, ax = plt.subplots()
for y in ys:
    ax.plot(df[x], df[y], "o-", label=y)
ax.set_xlabel(x)
ax.legend()
fig.savefig({png!r}, dpi=150)
'''


def emit_plot_script(path, csv_path, x, ys):
    png = (csv_path or "out") + ".png"
    _emit(path, PLOT_TEMPLATE.format(csv=csv_path or "out.csv", x=x, ys=ys, png=png))


# Configuration.

def build_complex(cfg, max_dim=None):
    d = int(cfg["d"])
    if cfg["geometry"] == "torus":
        return build_torus(d, int(cfg["N"]), max_dim)
    if cfg["geometry"] == "box":
        return build_box(d, int(cfg["n"]), max_dim, boundary=cfg["boundary"])
    raise UsageError(f"unknown geometry {cfg['geometry']!r}")


def resolve_p(cfg):
    if cfg["p"] is not None and cfg["beta"] is not None:
        raise UsageError("give exactly one of --p and --beta")
    if cfg["beta"] is not None:
        return beta_to_p(float(cfg["beta"]))
    if cfg["p"] is None:
        raise UsageError("one of --p or --beta is required")
    return float(cfg["p"])


def params_for(cfg, p):
    q = float(cfg["q"])
    q = int(q) if q.is_integer() else q
    return RcmParams(p, q, int(cfg["i"]), cfg["q_field"], bool(cfg["balanced"]))


def chain_settings(cfg):
    return ChainSettings(int(cfg["n_samples"]), int(cfg["burn_in"]), int(cfg["thin"]),
                         int(cfg["n_chains"]), int(cfg["seed"]), cfg["sampler"])


def _size_label(cfg):
    return cfg["N"] if cfg["geometry"] == "torus" else cfg["n"]


def _boundary_label(cfg):
    return "periodic" if cfg["geometry"] == "torus" else cfg["boundary"]


def parse_events(cfg, cx):
    out = []
    for tok in str(cfg["events"]).split(","):
        tok = tok.strip()
        if tok in ("A", "S"):
            out.append((tok, tok))
        elif tok.startswith("V"):
            n = int(tok[2:]) if tok.startswith("V:") else int(cfg["loop_size"] or 1)
            gamma = centered_square(cx.d, n, int(cfg["i"])).chain(cx)
            out.append((f"V:{n}", ("V", gamma)))
        else:
            raise UsageError(f"unknown event {tok!r}")
    return out


def _floats(s):
    if s is None:
        return None
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    return [float(x) for x in str(s).split(",") if x.strip()]


# Commands.

def estimate_row(cfg, cx, p, name, event, settings):
    est, se = estimate_event(cx, params_for(cfg, p), event, settings)
    return {"p": p, "q": cfg["q"], "i": cfg["i"], "d": cfg["d"], "N": _size_label(cfg),
            "boundary": _boundary_label(cfg), "event": name, "estimate": est, "stderr": se,
            "n_samples": settings.n_samples * settings.n_chains, "seed": settings.seed}


def cmd_sample(cfg):
    cx = build_complex(cfg)
    p = resolve_p(cfg)
    settings = chain_settings(cfg)
    rows = [estimate_row(cfg, cx, p, name, ev, settings) for name, ev in parse_events(cfg, cx)]
    write_csv(cfg["out"], metadata(cfg, "sample"), CSV_COLUMNS, rows)
    return EXIT_OK


def sweep_grid(cfg):
    steps = int(cfg["steps"])
    lo, hi = float(cfg["p_min"]), float(cfg["p_max"])
    if steps < 1 or not 0 <= lo <= hi <= 1:
        raise UsageError("invalid sweep grid")
    return [lo] if steps == 1 else np.linspace(lo, hi, steps).tolist()


def cmd_sweep(cfg):
    """Estimates of each event on a p grid; every p uses the same seed."""
    cx = build_complex(cfg)
    settings = chain_settings(cfg)
    events = parse_events(cfg, cx)
    rows = [estimate_row(cfg, cx, p, name, ev, settings) for p in sweep_grid(cfg) for name, ev in events]
    write_csv(cfg["out"], metadata(cfg, "sweep"), CSV_COLUMNS, rows)
    if cfg["emit_plot_script"]:
        emit_plot_script(cfg["emit_plot_script"], cfg["out"], "p", ["estimate"])
    return EXIT_OK


def bisect_lambda(cx, make_params, settings, lo, hi, target=0.5, tol=0.005, max_iter=20, z=2.0,
                  max_doublings=2, event="A"):
    """Stochastic bisection for the p at which mu(event) = target.

    At each midpoint the estimate is refined (doubling the sample count up
    to ``max_doublings`` times) until its z-interval excludes the target.
    The search stops when the bracket is narrower than ``tol`` or when the
    interval still contains the target at the largest sample size; the
    latter means the midpoint is statistically indistinguishable from the
    crossing.  All estimates use the same seed.
    """
    history = []
    lam, status = None, "max_iter"
    for _ in range(max_iter):
        if hi - lo <= tol:
            lam, status = 0.5 * (lo + hi), "bracket"
            break
        mid = 0.5 * (lo + hi)
        n = settings.n_samples
        for _ in range(max_doublings + 1):
            est, se = estimate_event(cx, make_params(mid), event, replace(settings, n_samples=n))
            if abs(est - target) > z * se:
                break
            n *= 2
        history.append({"p": mid, "estimate": est, "stderr": se, "n_samples": n * settings.n_chains})
        if abs(est - target) <= z * se:
            lam, status = mid, "ci_brackets_target"
            break
        if est > target:
            hi = mid
        else:
            lo = mid
    else:
        if hi - lo <= tol:
            lam, status = 0.5 * (lo + hi), "bracket"
    return {"lambda": lam, "ci": [lo, hi], "status": status, "converged": lam is not None,
            "n_total": int(sum(h["n_samples"] for h in history)), "history": history}


def cmd_lambda(cfg):
    cx = build_complex(cfg)
    res = bisect_lambda(cx, lambda p: params_for(cfg, p), chain_settings(cfg), float(cfg["p_lo"]),
                        float(cfg["p_hi"]), float(cfg["target"]), float(cfg["tol"]), int(cfg["max_iter"]),
                        float(cfg["z"]), int(cfg["max_doublings"]))
    out = {"meta": metadata(cfg, "lambda"), **res}
    write_json(cfg["out"], out)
    return EXIT_OK if res["converged"] else EXIT_NOCONV


def wilson_columns(i):
    return (["beta", "p", "q", "i", "d", "N"] + [f"n{j + 1}" for j in range(i)] +
            ["per", "area", "re_w", "im_w", "stderr", "v_gamma_est", "v_stderr", "n_samples", "seed"])


def cmd_wilson(cfg):
    if cfg["geometry"] == "torus" and cfg["boundary"] != "free":
        raise UsageError("boundary only applies to boxes")
    i = int(cfg["i"])
    cx = build_complex(cfg, max_dim=min(int(cfg["d"]), i + 1))
    q = int(float(cfg["q"]))
    ps = _floats(cfg["ps"]) or [resolve_p(cfg)]
    sizes = [int(x) for x in str(cfg["sizes"]).split(",")]
    scan = area_perimeter_scan(cx, i, q, ps, sizes, chain_settings(cfg))
    rows = []
    for r in scan["rows"]:
        row = dict(r, q=q, i=i, d=cfg["d"], N=_size_label(cfg), seed=cfg["seed"])
        for j, nj in enumerate(r["dims"]):
            row[f"n{j + 1}"] = nj
        rows.append(row)
    write_csv(cfg["out"], metadata(cfg, "wilson"), wilson_columns(i), rows)
    if cfg["json_out"]:
        write_json(cfg["json_out"], {"meta": metadata(cfg, "wilson"), **fit_rates(scan["rows"]),
                                     "rate_per_spread": {p: rate_spread([r for r in scan["rows"] if r["p"] == p], "rate_per") for p in ps},
                                     "rate_area_spread": {p: rate_spread([r for r in scan["rows"] if r["p"] == p], "rate_area") for p in ps}})
    if cfg["emit_plot_script"]:
        emit_plot_script(cfg["emit_plot_script"], cfg["out"], "area", ["v_gamma_est", "re_w"])
    return EXIT_OK


def cmd_sw_run(cfg):
    """Run the joint Swendsen-Wang chain and report energy and move statistics."""
    i = int(cfg["i"])
    cx = build_complex(cfg, max_dim=min(int(cfg["d"]), i + 1))
    q = int(float(cfg["q"]))
    p = resolve_p(cfg)
    settings = chain_settings(cfg)
    loop = centered_square(cx.d, int(cfg["loop_size"]), i) if cfg["loop_size"] else None
    vec = loop_vector(cx, loop.chain(cx), q) if loop else None
    rows = []
    for c, rng in enumerate(rcm.chain_rngs(settings.seed, settings.n_chains)):
        chain = SwendsenWangChain(cx, i, q, p_to_beta(p), rng)
        for _ in range(settings.burn_in):
            chain.sweep()
        for t in range(settings.n_samples):
            for _ in range(max(1, settings.thin)):
                chain.sweep()
            row = {"chain": c, "step": t, "energy": hamiltonian(cx, i, chain.f, q),
                   "open_fraction": float(chain.mask.mean())}
            if cx.is_torus:
                b = rcm.giant_count(cx, i, chain.mask, q)
                row["giant"] = b
                row["nonlocal_rate"] = 1.0 - q ** (-b)
            if vec is not None:
                row["wilson_value"] = int(np.dot(vec, chain.f) % q)
                row["v_gamma"] = chain.bounds(vec)
            rows.append(row)
    cols = list(rows[0].keys()) if rows else ["chain", "step"]
    write_csv(cfg["out"], metadata(cfg, "sw-run"), cols, rows)
    if cfg["json_out"]:
        summary = {k: float(np.mean([r[k] for r in rows])) for k in cols if k not in ("chain", "step")}
        write_json(cfg["json_out"], {"meta": metadata(cfg, "sw-run"), "means": summary})
    return EXIT_OK


# Verification suite.

def check_duality(tol=1e-12):
    out = []
    for q in (1, 2, 3):
        for p in (0.3, p_sd(q), 0.7):
            r = verify_duality(2, 2, 1, q, p)
            out.append({"name": f"duality T2_2 q={q} p={p:.6f}", "passed": r["tv"] < tol, **r})
    return out


def check_duality_4d(seed=0, n=30, tol=1e-9):
    cx = build_torus(4, 2)
    rng = np.random.default_rng(seed)
    configs = [rng.random(cx.n_cells(2)) < u for u in rng.random(n)]
    r = termwise_ratio_check(cx, 2, 3, p_sd(3), configs)
    return [{"name": "duality termwise T4_2 i=2 q=3 p=p_sd", "passed": r["max_offset"] < tol, **r}]


def check_partition(tol=1e-10):
    out = []
    for q in (1, 2, 3):
        for p in (0.3, p_sd(q), 0.7):
            r = verify_partition_duality(2, 2, 1, q, p)
            out.append({"name": f"partition T2_2 q={q} p={p:.6f}", "passed": r["rel_error"] < tol, **r})
    return out


def check_alexander(n_random=100, seed=0, cases=((2, 4, 1), (4, 2, 2)), qs=(2, 3)):
    out = []
    rng = np.random.default_rng(seed)
    for d, N, i in cases:
        cx = build_torus(d, N)
        for q in qs:
            c = eta_offset_constant(cx, i, q)
            fails = {"split": 0, "giant_sum": 0, "local_match": 0, "eta_offset": 0, "euler": 0}
            for u in rng.random(n_random):
                m = rng.random(cx.n_cells(i)) < u
                r = alexander_check(cx, i, m, q)
                for k in ("split", "giant_sum", "local_match"):
                    fails[k] += not r[k]
                fails["eta_offset"] += r["betti_i"] - r["betti_im1"] != int(m.sum()) + c
                fails["euler"] += not euler_poincare_check(Subcomplex.plaquettes(cx, i, m), q)
            out.append({"name": f"alexander T{d}_{N} i={i} q={q}", "passed": not any(fails.values()),
                        "n_configs": n_random, "c": c, "failures": fails})
    return out


def check_coupling(tol=1e-12):
    out = []
    for label, cx in (("one square", build_grid((1, 1))), ("2x2 box", build_grid((2, 2)))):
        for q in (2, 3):
            for beta in (0.5, 1.0):
                r = coupling_marginal_check(cx, 1, q, beta)
                out.append({"name": f"coupling {label} q={q} beta={beta}",
                            "passed": max(r.values()) < tol, **r})
    return out


def check_wilson(tol=1e-12):
    out = []
    cases = [("one square", build_grid((1, 1)), 1, LoopSpec((0, 0), (1,), (0,))),
             ("2x2 box", build_grid((2, 2)), 1, LoopSpec((0, 0), (2,), (0,))),
             ("unit cube", build_grid((1, 1, 1)), 2, LoopSpec((0, 0, 0), (1, 1), (0, 1)))]
    for label, cx, i, loop in cases:
        for q in (2, 3):
            if q ** cx.n_cells(i - 1) > 2 ** 20:
                continue
            r = wilson_identity_check(cx, i, q, 1.0, loop.chain(cx))
            errs = [r["err_W"], r["err_tau"], r["err_law_not_V"], r["err_law_V"]]
            out.append({"name": f"wilson {label} q={q}", "passed": max(errs) < tol, **r})
    return out


def check_sw_stationarity(tol=1e-10):
    out = []
    sq = build_grid((1, 1))
    for q in (2, 3):
        for beta in (0.5, 1.0):
            _, T = sw_transition_matrix(sq, 1, q, beta)
            g = exact_gibbs(sq, 1, q, beta)
            stat = float(np.abs(g.probs @ T - g.probs).max())
            db = rcm.detailed_balance_residual(g.probs, T)
            out.append({"name": f"sw stationarity one square q={q} beta={beta}",
                        "passed": stat < tol and db < tol, "stationarity": stat, "detailed_balance": db})
    params = RcmParams(0.4, 2, 1)
    configs, kernels = rcm.transition_matrices(sq, params)
    pi = rcm.exact_distribution(sq, params).probs
    stat = float(np.abs(pi @ rcm.sweep_matrix(kernels) - pi).max())
    db = max(rcm.detailed_balance_residual(pi, K) for K in kernels)
    out.append({"name": "glauber stationarity one square q=2 p=0.4", "passed": stat < tol and db < tol,
                "stationarity": stat, "detailed_balance": db})
    return out


@contextlib.contextmanager
def corrupted_weights(delta=0.05):
    """Negative control: perturb the log-weight by delta * (eta mod 2)."""
    orig = rcm.log_weight_from_stats

    def bad(eta, b_im1, giant, n_plaq, params):
        return orig(eta, b_im1, giant, n_plaq, params) + delta * (eta % 2)

    rcm.log_weight_from_stats = bad
    try:
        yield
    finally:
        rcm.log_weight_from_stats = orig


def run_suite(flags, seed=0, n_random=100):
    selected = [k for k in ("duality", "partition", "alexander", "coupling", "sw_stationarity") if flags.get(k)]
    if not selected:
        selected = ["duality", "partition", "alexander", "coupling", "sw_stationarity"]
    report = {}
    for name in selected:
        if name == "duality":
            report[name] = check_duality() + check_duality_4d(seed)
        elif name == "partition":
            report[name] = check_partition()
        elif name == "alexander":
            report[name] = check_alexander(n_random, seed)
        elif name == "coupling":
            report[name] = check_coupling() + check_wilson()
        else:
            report[name] = check_sw_stationarity()
    return report


def cmd_verify(cfg):
    ctx = corrupted_weights() if cfg["inject_fault"] else contextlib.nullcontext()
    with ctx:
        report = run_suite(cfg, int(cfg["seed"]), int(cfg["n_random"]))
    n_fail = sum(not r["passed"] for rs in report.values() for r in rs)
    write_json(cfg["out"], {"meta": metadata(cfg, "verify"), "all_passed": n_fail == 0,
                            "n_failed": n_fail, "checks": report})
    return EXIT_OK if n_fail == 0 else EXIT_CHECK


COMMANDS = {"sample": cmd_sample, "sweep": cmd_sweep, "lambda": cmd_lambda, "wilson": cmd_wilson,
            "sw-run": cmd_sw_run, "verify": cmd_verify}


def _add_common(sp):
    S = argparse.SUPPRESS
    sp.add_argument("--config", default=S, help="flat JSON file of settings")
    sp.add_argument("--geometry", choices=["torus", "box"], default=S)
    for name, typ in (("d", int), ("N", int), ("n", int), ("i", int), ("q_field", int),
                      ("p", float), ("beta", float), ("q", float),
                      ("n_samples", int), ("burn_in", int), ("thin", int), ("n_chains", int), ("seed", int),
                      ("p_min", float), ("p_max", float), ("steps", int), ("target", float), ("tol", float),
                      ("max_iter", int), ("p_lo", float), ("p_hi", float), ("z", float), ("max_doublings", int),
                      ("loop_size", int), ("n_random", int)):
        flag = "--" + name.replace("_", "-")
        sp.add_argument(flag, dest=name, type=typ, default=S)
    sp.add_argument("--boundary", choices=["free", "wired"], default=S)
    sp.add_argument("--sampler", choices=["auto", "sw", "glauber", "bernoulli"], default=S)
    for name in ("events", "sizes", "ps", "out", "json_out", "emit_plot_script"):
        sp.add_argument("--" + name.replace("_", "-"), dest=name, default=S)
    sp.add_argument("--balanced", dest="balanced", action="store_true", default=S)


def build_parser():
    ap = Parser(prog="plaquette-rcm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        _add_common(sp)
        if name == "verify":
            for flag in ("duality", "partition", "alexander", "coupling", "sw_stationarity", "inject_fault"):
                sp.add_argument("--" + flag.replace("_", "-"), dest=flag, action="store_true",
                                default=argparse.SUPPRESS)
    return ap


def load_config(args):
    cfg = dict(DEFAULTS)
    path = args.pop("config", None)
    if path:
        with open(path) as fh:
            extra = json.load(fh)
        unknown = set(extra) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(extra)
    cfg.update(args)
    return cfg


def main(argv=None):
    try:
        args = vars(build_parser().parse_args(argv))
        command = args.pop("command", None)
        if command is None:
            raise UsageError("a subcommand is required")
        cfg = load_config(args)
        return COMMANDS[command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
