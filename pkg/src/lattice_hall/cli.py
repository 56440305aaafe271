"""Command line entry point: lattice-hall <subcommand> --config path --out dir."""

from __future__ import annotations

import argparse
import cmath
import csv
import hashlib
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import braiding, freefermion, hall, lemmas, models
from .dynamics import AssumptionError, ConvergenceError
from .filter import FilterError, SwitchProfile
from .geometry import LatticeWindow
from .interaction import Interaction, QuadratureError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_ASSUMPTION, EXIT_CONVERGENCE = 0, 1, 2, 3, 4
ORACLE_MODELS = {"hofstadter_q3": 3, "hofstadter_q4": 4, "hofstadter_q6": 6}


class ConfigError(ValueError):
    def __init__(self, pointer, message):
        super().__init__(message)
        self.pointer = pointer


def load_schema():
    return json.loads(resources.files("lattice_hall").joinpath("schemas/config.json").read_text())


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"not valid JSON ({exc})") from exc
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        pointer = "/" + "/".join(str(p) for p in e.absolute_path)
        raise ConfigError(pointer, e.message)
    if doc["model"]["name"] == "custom" and "interaction_file" not in doc["model"]:
        raise ConfigError("/model/interaction_file", "required for the custom model")
    return doc


def scalar(value, residual=0.0, tol=None):
    """A reported number with its residual and tolerance; pass is None when no tolerance applies."""
    ok = None if tol is None else bool(residual <= tol)
    return {"value": _num(value), "residual": _num(residual), "tol": tol, "pass": ok}


def _num(x):
    if isinstance(x, complex):
        return {"re": float(x.real), "im": float(x.imag)}
    return float(x)


# ------------------------------------------------------------------ models


def window_of(doc):
    w = doc.get("window", {"half_width": 1})
    return LatticeWindow.from_json(w)


def build_model(doc, window=None, params=None):
    m = doc["model"]
    name = m["name"]
    window = window or window_of(doc)
    p = dict(m.get("params", {}))
    p.update(params or {})
    if name == "paramagnet":
        model = models.paramagnet(window)
    elif name == "perturbed_paramagnet":
        model = models.perturbed_paramagnet(window, lam=p.get("lambda", 0.1), seed=p.get("seed", 0))
    elif name == "cdw":
        model = models.cdw(window, lam=p.get("lambda", 0.3), mu=p.get("mu", 1.0))
    elif name == "custom":
        inter = Interaction.from_json(json.loads(Path(m["interaction_file"]).read_text()))
        model = models.custom(window, inter, m.get("charges", (0, 1)))
    else:
        raise ConfigError("/model/name", f"{name} is a single-particle oracle model; use the oracle subcommand")
    if "nonconserving" in m:
        nc = m["nonconserving"]
        model = models.inject_nonconserving(model, tuple(nc.get("site", (1, 1))), nc.get("strength", 0.2))
    return model


def build_context(doc, tol_scale=1.0, window=None, params=None):
    f = doc.get("filter", {})
    prof = SwitchProfile(**f.get("profile", {}))
    model = build_model(doc, window, params)
    return hall.HallContext.build(model, g=f.get("gap"), profile=prof, gap_fraction=f.get("gap_fraction", 0.9))


# ------------------------------------------------------------------ subcommands


def run_verify_lemmas(doc, tol_scale):
    ctx = build_context(doc, tol_scale)
    opts = doc.get("lemmas", {})
    rep = lemmas.verify_lemmas(
        ctx,
        seed=doc.get("seed", 0),
        n_samples=opts.get("samples", 20),
        n_random=opts.get("random_instances", 50),
        tol_scale=tol_scale,
        heavy=opts.get("heavy", True),
    )
    rows = [
        {
            "row": r.name,
            "status": r.status,
            "charge_dependent": r.charge_dependent,
            "measured": scalar(r.residual, r.residual, r.tol),
            "detail": r.detail,
        }
        for r in rep.rows
    ]
    report = {"model": ctx.model.describe(), "g": scalar(ctx.F.gap, 0.0, None), "rows": rows, "failing": rep.failing}
    table = [[r.name, r.status, r.residual, r.tol, r.charge_dependent] for r in rep.rows]
    return report, {"rows": (["row", "status", "residual", "tol", "charge_dependent"], table)}, rep.passed


def hall_point(ctx, tol_scale=1.0, samples=20, seed=0):
    path = "interaction" if ctx.alg.dim <= 2**10 else "operator"
    cur = hall.current_J(ctx, path=path)
    j0 = hall.current_J0(ctx, path=path)
    rng = np.random.default_rng(seed)
    obs = lemmas.sample_observables(ctx, rng, samples)
    inv = max(abs(ctx.omega(j0.J0 @ A) - j0.omega_J0 * ctx.omega(A)) for A in obs)
    qe = max(hall.qbar_eigen_residual(ctx, G) for G in (hall.AB, hall.AD))
    res = {
        "barq_hall": scalar(abs(cur.kappa - cur.kappa_qbar), abs(cur.kappa - cur.kappa_qbar), 1e-6 * tol_scale),
        "J0_reg": scalar(
            abs(j0.omega_J0 + 2 * math.pi * cur.kappa), abs(j0.omega_J0 + 2 * math.pi * cur.kappa), 1e-5 * tol_scale
        ),
        "J0_invariance": scalar(inv, inv, 1e-6 * tol_scale),
        "qbar_eigenvector": scalar(qe, qe, 1e-8 * tol_scale),
        "J_paths": scalar(cur.path_discrepancy, cur.path_discrepancy, 1e-10 * tol_scale),
        "J0_quadrature": scalar(j0.spectral_gap, j0.spectral_gap, 1e-6 * tol_scale),
    }
    tail = None
    if path == "interaction":
        ct = hall.corner_tail(ctx)
        tail = {"distances": ct.distances, "norms": ct.norms, "rate": ct.rate, "extrapolated_remainder": ct.remainder}
    out = {
        "model": ctx.model.describe(),
        "N": ctx.window.to_json(),
        "n_sites": ctx.window.n_sites,
        "path": path,
        "g": scalar(ctx.F.gap, 0.0, None),
        "gap": scalar(ctx.sd.gap, ctx.sd.residual, 1e-10),
        "kappa": scalar(cur.kappa, abs(cur.kappa_imag), 1e-10 * tol_scale),
        "kappa_times_2pi": scalar(2 * math.pi * cur.kappa, 2 * math.pi * abs(cur.kappa_imag), 1e-9 * tol_scale),
        "omega_J0": scalar(j0.omega_J0, j0.quadrature_change, 1e-6 * tol_scale),
        "residuals": res,
        "corner_tail": tail,
    }
    return out, all(v["pass"] for v in res.values())


def _windows(doc):
    ws = doc.get("sweep", {}).get("windows")
    return [LatticeWindow.from_json(w) for w in ws] if ws else [window_of(doc)]


def run_hall(doc, tol_scale):
    pts, ok = [], True
    for W in _windows(doc):
        ctx = build_context(doc, tol_scale, window=W)
        p, good = hall_point(ctx, tol_scale, seed=doc.get("seed", 0))
        pts.append(p)
        ok &= good
    report = dict(pts[-1])
    report["sweep"] = pts
    header = ["n_sites", "window", "kappa", "kappa_times_2pi", "omega_J0", "barq_hall", "J0_reg"]
    table = [
        [
            p["n_sites"],
            json.dumps(p["N"]),
            p["kappa"]["value"],
            p["kappa_times_2pi"]["value"],
            p["omega_J0"]["value"],
            p["residuals"]["barq_hall"]["residual"],
            p["residuals"]["J0_reg"]["residual"],
        ]
        for p in pts
    ]
    return report, {"sweep": (header, table)}, ok


def _wrap(x):
    return abs((x + math.pi) % (2 * math.pi) - math.pi)


def run_braiding(doc, tol_scale):
    opts = doc.get("braiding", {})
    radii = opts.get("radii", [0, 1])
    powers = opts.get("powers", [2, 3])
    pts, ok = [], True
    last_ctx, kappa = None, 0.0
    for W in _windows(doc):
        ctx = build_context(doc, tol_scale, window=W)
        kappa = hall.current_J(ctx, path="operator").kappa
        for r in radii:
            th = braiding.theta_estimate(ctx, r).theta
            cons = _wrap(cmath.phase(th) + (2 * math.pi) ** 2 * kappa)
            pts.append(
                {
                    "n_sites": W.n_sites,
                    "window": W.to_json(),
                    "r": r,
                    "theta": scalar(th, abs(abs(th) - 1.0), 1e-3 * tol_scale),
                    "arg_theta": float(cmath.phase(th)),
                    "kappa": scalar(kappa, 0.0, None),
                    "cross_consistency": scalar(cons, cons, 5e-3 * tol_scale),
                }
            )
        last_ctx = ctx
    ctx = last_ctx
    res = [p["cross_consistency"]["residual"] for p in pts]
    monotone = all(b <= a + 1e-12 for a, b in zip(res, res[1:]))
    power = {}
    for p in powers:
        thp, thp_ref, gap = braiding.theta_power_check(ctx, p)
        power[str(p)] = scalar(thp, gap, 1e-3 * tol_scale)
    ident = braiding.identity_theta(ctx)
    gauge = braiding.gauge_invariance(ctx)
    extra = {
        "identity_automorphism": scalar(ident, abs(ident - 1), 1e-10 * tol_scale),
        "phase_gauge": scalar(gauge, gauge, 1e-12 * tol_scale),
    }
    if opts.get("intertwiner", False):
        rng = np.random.default_rng(doc.get("seed", 0))
        obs = lemmas.sample_observables(ctx, rng, 4)
        rho = braiding.rho_lambda(ctx, braiding.LAMBDA1)
        gap = braiding.rho_route_gap(ctx, rho, obs, tol=1e-8)
        extra["rho_routes"] = scalar(gap, gap, 1e-5 * tol_scale)
        ir = braiding.intertwiner_Vrt(ctx, 0, 0, obs, tol=1e-7)
        extra["intertwiner_identity"] = scalar(ir.identity_residual, ir.identity_residual, 1e-4 * tol_scale)
        extra["intertwiner_unitarity"] = scalar(ir.unitarity, ir.unitarity, 1e-10 * tol_scale)
    q = braiding.quantization_check(2 * math.pi * kappa, 1)
    j0 = hall.current_J0(ctx, path="operator").omega_J0
    e = cmath.exp(1j * j0)
    report = {
        "model": ctx.model.describe(),
        "points": pts,
        "cross_consistency_monotone": monotone,
        "power_check": power,
        "checks": extra,
        "quantization": {
            "p_oracle": 1,
            "distance": scalar(q.residual, q.residual, None),
            "exp_i_omega_J0": scalar(e, abs(e - 1), None),
        },
    }
    ok &= monotone
    ok &= all(p["theta"]["pass"] and p["cross_consistency"]["pass"] for p in pts)
    ok &= all(v["pass"] for v in power.values()) and all(v["pass"] for v in extra.values())
    header = ["n_sites", "r", "theta_re", "theta_im", "arg_theta", "kappa", "cross_consistency"]
    table = [
        [
            p["n_sites"],
            p["r"],
            p["theta"]["value"]["re"],
            p["theta"]["value"]["im"],
            p["arg_theta"],
            p["kappa"]["value"],
            p["cross_consistency"]["residual"],
        ]
        for p in pts
    ]
    return report, {"theta_sweep": (header, table)}, bool(ok)


def oracle_report(q, sizes=(12, 16, 24), margin=4, p_oracle=1, gap_fraction=2.0 / 3.0, t=1.0):
    pts = []
    chern = None
    for L in sizes:
        m = freefermion.hofstadter(L, 1, q, t=t)
        if chern is None:
            chern, err = freefermion.chern_number(m.bloch, q, [0])
        r = freefermion.sp_kappa(m, g=gap_fraction * m.bulk_gap, margin=margin)
        d = abs(r.two_pi_kappa - chern)
        pts.append(
            {
                "L": L,
                "two_pi_kappa": scalar(r.two_pi_kappa, d, 0.05),
                "kappa": scalar(r.kappa, d / (2 * math.pi), 0.05 / (2 * math.pi)),
                "trace_PK": scalar(r.trace_PK, r.trace_PK, 1e-10),
                "g": scalar(r.gap, 0.0, None),
                "discrepancy": d,
            }
        )
    disc = [p["discrepancy"] for p in pts]
    monotone = all(b < a for a, b in zip(disc, disc[1:]))
    q_rep = braiding.quantization_check(pts[-1]["two_pi_kappa"]["value"], p_oracle)
    m = freefermion.hofstadter(sizes[-1], 1, q, t=t)
    tr = freefermion.sp_kappa(m.conjugate(), g=gap_fraction * m.bulk_gap, margin=margin).two_pi_kappa
    spectrum = freefermion.chern_spectrum(m.bloch, q)
    report = {
        "oracle": True,
        "model": {"name": f"hofstadter_q{q}", "flux": f"1/{q}", "filled_bands": 1, "t": t},
        "chern_number": chern,
        "band_cherns": [{"bands": g, "chern": c} for g, c in spectrum],
        "points": pts,
        "monotone": monotone,
        "quantization": {
            "p_oracle": p_oracle,
            "distance": scalar(q_rep.residual, q_rep.residual, 0.05),
            "nearest": q_rep.nearest,
        },
        "time_reversal": scalar(tr, abs(tr + pts[-1]["two_pi_kappa"]["value"]), 1e-8),
    }
    ok = pts[-1]["two_pi_kappa"]["pass"] and monotone and report["quantization"]["distance"]["pass"]
    return report, bool(ok)


def run_oracle(doc, tol_scale):
    name = doc["model"]["name"]
    if name not in ORACLE_MODELS:
        raise ConfigError("/model/name", "oracle runs need a hofstadter_q{3,4,6} model")
    o = doc.get("oracle", {})
    report, ok = oracle_report(
        ORACLE_MODELS[name],
        tuple(o.get("sizes", (12, 16, 24))),
        o.get("margin", 4),
        o.get("p_oracle", 1),
        o.get("gap_fraction", 2.0 / 3.0),
        doc["model"].get("params", {}).get("t", 1.0),
    )
    header = ["L", "two_pi_kappa", "chern_number", "discrepancy"]
    table = [[p["L"], p["two_pi_kappa"]["value"], report["chern_number"], p["discrepancy"]] for p in report["points"]]
    return report, {"sweep": (header, table)}, ok


def _sweep_job(args):
    doc, window, params, quantities, tol_scale = args
    with threadpool_limits(1):
        ctx = build_context(doc, tol_scale, window=LatticeWindow.from_json(window), params=params)
        out = {"window": window, "params": params, "n_sites": ctx.window.n_sites, "gap": ctx.sd.gap}
        ok = True
        if "kappa" in quantities:
            p, good = hall_point(ctx, tol_scale)
            out["kappa"] = p["kappa"]["value"]
            out["omega_J0"] = p["omega_J0"]["value"]
            ok &= good
        if "theta" in quantities:
            th = braiding.theta_estimate(ctx, 0).theta
            out["theta_re"], out["theta_im"] = th.real, th.imag
            ok &= abs(abs(th) - 1) <= 1e-3 * tol_scale
        out["pass"] = bool(ok)
        return out


def run_sweep(doc, tol_scale, threads=1):
    s = doc.get("sweep", {})
    windows = [w for w in s.get("windows", [doc.get("window", {"half_width": 1})])]
    params = s.get("params", [{}])
    quantities = s.get("quantities", ["kappa"])
    jobs = [(doc, w, p, quantities, tol_scale) for p in params for w in windows]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    header = ["n_sites", "window", "params", "gap", "kappa", "omega_J0", "theta_re", "theta_im", "pass"]
    table = [
        [r["n_sites"], json.dumps(r["window"]), json.dumps(r["params"], sort_keys=True)]
        + [r.get(k, "") for k in ("gap", "kappa", "omega_J0", "theta_re", "theta_im", "pass")]
        for r in results
    ]
    report = {"model": doc["model"], "jobs": results}
    return report, {"sweep": (header, table)}, all(r["pass"] for r in results)


SUBCOMMANDS = {
    "verify-lemmas": run_verify_lemmas,
    "hall": run_hall,
    "braiding": run_braiding,
    "oracle": run_oracle,
    "sweep": run_sweep,
}


# ------------------------------------------------------------------ persistence


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_default)


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_outputs(out_dir, sub, report, tables, manifest):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body = _canonical(report)
    (out / f"{sub}.json").write_text(body + "\n")
    for name, (header, rows) in tables.items():
        with open(out / f"{sub}_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    manifest["report_sha256"] = hashlib.sha256(body.encode()).hexdigest()
    (out / "manifest.json").write_text(_canonical(manifest) + "\n")


def make_manifest(sub, doc, config_path, tol_scale, threads):
    f = doc.get("filter", {})
    prof = SwitchProfile(**f.get("profile", {}))
    blob = json.dumps(doc, sort_keys=True).encode()
    return {
        "schema_version": SCHEMA_VERSION,
        "subcommand": sub,
        "config": str(config_path),
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "model": doc["model"],
        "window": doc.get("window", {"half_width": 1}),
        "seed": doc.get("seed", 0),
        "filter_profile": prof.to_json(),
        "filter_profile_digest": prof.digest(),
        "tol_scale": tol_scale,
        "threads": threads,
        "versions": {"python": platform.python_version(), "numpy": np.__version__},
    }


def main(argv=None):
    ap = argparse.ArgumentParser(prog="lattice-hall", description=__doc__)
    ap.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--tol-scale", type=float, default=1.0)
    args = ap.parse_args(argv)

    try:
        doc = load_config(args.config)
    except ConfigError as exc:
        print(f"config error at {exc.pointer}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"config error at /: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    manifest = make_manifest(args.subcommand, doc, args.config, args.tol_scale, args.threads)
    t0 = time.time()
    try:
        with threadpool_limits(args.threads):
            fn = SUBCOMMANDS[args.subcommand]
            if args.subcommand == "sweep":
                report, tables, ok = fn(doc, args.tol_scale, args.threads)
            else:
                report, tables, ok = fn(doc, args.tol_scale)
    except ConfigError as exc:
        print(f"config error at {exc.pointer}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (AssumptionError, FilterError, freefermion.GaplessError, freefermion.BandTouchingError) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConvergenceError, QuadratureError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    report = {"schema_version": SCHEMA_VERSION, "subcommand": args.subcommand, "passed": ok, **report}
    manifest["wall_clock_s"] = round(time.time() - t0, 3)
    write_outputs(args.out, args.subcommand, report, tables, manifest)
    _summary(args.subcommand, report)
    return EXIT_OK if ok else EXIT_FAIL


def _summary(sub, report):
    if sub == "verify-lemmas":
        for r in report["rows"]:
            print(f"{r['row']:28s} {r['status']:6s} {r['measured']['residual']:.3e} <= {r['measured']['tol']:.1e}")
        if report["failing"]:
            print("failing rows: " + ", ".join(report["failing"]))
    elif sub == "hall":
        print(f"kappa = {report['kappa']['value']:.6e}  2*pi*kappa = {report['kappa_times_2pi']['value']:.6e}")
    elif sub == "oracle":
        for p in report["points"]:
            print(f"L={p['L']:3d}  2*pi*kappa = {p['two_pi_kappa']['value']:.6f}  chern = {report['chern_number']}")
    elif sub == "braiding":
        for p in report["points"]:
            th = p["theta"]["value"]
            print(f"n={p['n_sites']:3d} r={p['r']}  theta = {th['re']:.8f}{th['im']:+.8f}i  2*pi*kappa = "
                  f"{2 * math.pi * p['kappa']['value']:.3e}")
    print("PASS" if report["passed"] else "FAIL")


if __name__ == "__main__":
    sys.exit(main())
