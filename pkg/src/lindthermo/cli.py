"""Command-line front-end: ``lindthermo <scenario> --config run.toml``.

Every run writes CSV/JSON data and a ``manifest.json`` into the output
directory. Identical configurations produce byte-identical files.
"""
import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import fcs as fcs_mod
from . import geometry, lindblad, models, moments
from .config import SCENARIOS, ConfigError, RunConfig, from_dict, load_raw
from .lindblad import DegenerateSteadyState, IntegrationError, InvariantViolation
from .opcore import trace_distance
from .phasespace import GaussianQBM

log = logging.getLogger("lindthermo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4
EXIT_IO = 5
EXIT_PARTIAL = 6

VALIDATE_DB_TOL = 1e-8
VALIDATE_STEADY_TOL = 1e-6
FT_MARK_TOL = 1e-4


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_rows(path, header, rows, fmt):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt % v if isinstance(v, float) else v for v in row])


# --------------------------------------------------------------------------
# builders


def build_protocol(cfg: RunConfig) -> lindblad.Protocol:
    p, mdl = cfg["protocol"], cfg["model"]
    w0, w1, tau = p["omega0"], p["omega_tau"], p["tau"]
    shape = p["shape"]
    if shape == "exponential":
        return lindblad.exponential_protocol(w0, w1, tau)
    if shape == "linear":
        return lindblad.linear_protocol(w0, w1, tau)
    if shape == "static":
        return lindblad.static_protocol(w0, tau)
    if shape == "table1":
        return geometry.table1_protocol(p["case"], w0, w1, tau)
    return geometry.optimal_protocol(w0, w1, mdl["beta"], tau, mdl["m"], mdl["kappa"],
                                     cfg["numerics"]["n_grid"])


def basis_choice(cfg: RunConfig):
    """(dim, omega_ref) for the Fock basis, from the config or the endpoint Gibbs spreads."""
    mdl, p = cfg["model"], cfg["protocol"]
    ends = [p["omega0"], p["omega_tau"]]
    w_ref = mdl["omega_ref"] or models.reference_frequency(ends, mdl["beta"], mdl["m"])
    dim = mdl["dim"] or models.suggest_dim(ends, mdl["beta"], w_ref)
    return dim, w_ref


def build_model(cfg: RunConfig):
    mdl = cfg["model"]
    if mdl["kind"] == "qubit":
        return models.QubitModel(mdl["gammas"], mdl["betas"])
    dim, w_ref = basis_choice(cfg)
    return models.QBMModel(mdl["m"], mdl["kappa"], mdl["beta"], dim, w_ref)


def truncation_report(cfg: RunConfig, model) -> dict:
    if cfg["model"]["kind"] != "qbm":
        return {"exact": True}
    out = {"dim": model.dim, "omega_ref": model.basis.omega_ref, "top_level_population": {}}
    for label, w in (("start", cfg["protocol"]["omega0"]), ("end", cfg["protocol"]["omega_tau"])):
        h = model.hamiltonian(w)
        rho, _ = models.gibbs_state(h, model.beta)
        out["top_level_population"][label] = float(abs(rho[-1, -1]))
    return out


# --------------------------------------------------------------------------
# scenarios; each returns a JSON-ready summary and writes its own data files


def run_validate(cfg, model, out, fmt):
    lam = cfg["protocol"]["omega0"]
    mdl = cfg["model"]
    if mdl["kind"] == "qbm" and mdl["omega_ref"] is None:
        # diagonal H at the checked frequency, so truncation only trims the Gibbs tail
        dim = mdl["dim"] or models.suggest_dim([lam], mdl["beta"], lam)
        model = models.QBMModel(mdl["m"], mdl["kappa"], mdl["beta"], dim, lam)
    report = {"lambda": lam, "dim": model.dim, "checks": {}}
    rho_ss = lindblad.steady_state(model, lam)
    betas = model.bath_betas()
    for i, d in sorted(lindblad.dissipators_by_bath(model, lam).items()):
        rho_b, _ = models.gibbs_state(model.hamiltonian(lam), betas[i])
        report["checks"][f"detailed_balance_bath{i}"] = lindblad.detailed_balance_residual(d, rho_b)
        report["checks"][f"stationarity_bath{i}"] = lindblad.stationarity_residual(d, rho_b)
    if len(set(model.bath_betas())) == 1:
        rho_g, _ = models.gibbs_state(model.hamiltonian(lam), model.bath_betas()[0])
        report["checks"]["steady_state_trace_distance"] = float(trace_distance(rho_ss, rho_g))
    if mdl["kind"] == "qbm":
        gen = moments.moment_generator(lam, mdl["beta"], mdl["m"], mdl["kappa"])
        geq = moments.gamma_equilibrium(lam, mdl["beta"], mdl["m"]).as_array()
        report["checks"]["moment_stationarity"] = float(np.max(np.abs(gen(geq))))
    limits = {k: (VALIDATE_STEADY_TOL if k.startswith("steady") else VALIDATE_DB_TOL)
              for k in report["checks"]}
    report["tolerances"] = limits
    report["passed"] = all(report["checks"][k] <= limits[k] for k in limits)
    _dump_json(os.path.join(out, "validate.json"), report)
    if not report["passed"]:
        raise InvariantViolation(f"validation failed: {report['checks']}")
    return report


def run_evolve(cfg, model, out, fmt):
    proto = build_protocol(cfg)
    beta0 = model.bath_betas()[0]
    num, mdl = cfg["numerics"], cfg["model"]
    frame = None
    if num["basis"] == "balanced":
        frame = moments.balanced_frame(proto, mdl["beta"], mdl["m"], mdl["kappa"])
        h0 = model.frame_hamiltonian(proto.start, frame.start)
    else:
        h0 = model.hamiltonian(proto.start)
    rho0, _ = models.gibbs_state(h0, beta0)
    traj = lindblad.evolve(model, proto, rho0, n_samples=num["n_samples"], rtol=num["rtol"], frame=frame)
    traj.to_csv(os.path.join(out, "trajectory.csv"), fmt)
    obs = traj.observables
    summary = {"final_trace": float(np.real(obs["tr_rho"][-1])),
               "min_eigenvalue": float(np.min(np.real(obs["min_eig"]))) if "min_eig" in obs else None}
    if "energy" in obs:
        summary["final_energy"] = float(np.real(obs["energy"][-1]))
    if mdl["kind"] == "qbm":
        # full moments against the closed three-moment equations, scaled per component
        ref = moments.evolve_gamma(proto, moments.gamma_equilibrium(proto.start, mdl["beta"], mdl["m"]),
                                   mdl["beta"], mdl["m"], mdl["kappa"], n_samples=len(traj.times)).gamma
        full = np.column_stack([obs[k] for k in ("x2", "xp", "p2")])
        summary["moment_ode_deviation"] = float(np.max(np.abs(full - ref) / np.abs(ref).max(axis=0)))
    _dump_json(os.path.join(out, "evolve.json"), summary)
    return summary


def run_fcs(cfg, model, out, fmt):
    proto = build_protocol(cfg)
    f, num = cfg["fcs"], cfg["numerics"]
    us = np.linspace(f["u_min"], f["u_max"], f["n_u"])
    rtol = num["rtol"]
    if num["engine"] == "gaussian":
        mdl = cfg["model"]
        g = GaussianQBM(mdl["m"], mdl["kappa"], mdl["beta"])
        chis = [complex(np.exp(g.log_chi(proto, u, rtol=rtol))) for u in us]
        report = g.ft_report(proto, rtol=rtol)
        mom, flags = g.work_moments(proto, f["moment_order"], rtol=rtol)
    else:
        beta_s = f["beta_s"] or model.bath_betas()[0]
        rho0, _ = models.gibbs_state(model.hamiltonian(proto.start), beta_s)
        chis = []
        for u in us:
            fields = fcs_mod.CountingFields(u=float(u))
            chis.append(fcs_mod.characteristic_function(model, proto, rho0, fields, rtol=rtol).chi)
        report = fcs_mod.ft_report(model, proto, f["mode"], f["beta_s"], rtol=rtol)
        if f["mode"] == "heat_exchange":
            mom, flags = [], []
        else:
            mom, flags = fcs_mod.work_moments(model, proto, rho0, f["moment_order"], rtol=min(rtol, 1e-11))
    _write_rows(os.path.join(out, "chi.csv"), ["u", "Re_chi", "Im_chi"],
                [(float(u), float(c.real), float(c.imag)) for u, c in zip(us, chis)], fmt)
    summary = {
        "delta_F": report["delta_F"],
        "chi_at_ft_point": report["chi"],
        "ft_deviation": report["ft_deviation"],
        "ft_satisfied": bool(report["ft_deviation"] <= FT_MARK_TOL),
        "tilted_state_defect": report.get("tilted_state_defect"),
        "moments": [float(x) for x in mom],
        "moment_flags": [bool(x) for x in flags],
    }
    _dump_json(os.path.join(out, "fcs.json"), summary)
    return summary


def _excess_work(cfg, proto):
    mdl, num = cfg["model"], cfg["numerics"]
    g0 = moments.gamma_equilibrium(proto.start, mdl["beta"], mdl["m"])
    n = num["n_samples"] | 1
    n = max(n, 2001)
    traj = moments.evolve_gamma(proto, g0, mdl["beta"], mdl["m"], mdl["kappa"], n_samples=n,
                                rtol=min(num["rtol"], 1e-10))
    return traj, moments.work_functionals(traj, proto)


def run_excess_work(cfg, model, out, fmt):
    proto = build_protocol(cfg)
    traj, (W, W_eq, W_ex) = _excess_work(cfg, proto)
    traj.to_csv(os.path.join(out, "moments.csv"), fmt)
    summary = {"W": W, "W_eq": W_eq, "W_ex": W_ex}
    if cfg["excess_work"]["compare"]:
        mdl, p = cfg["model"], cfg["protocol"]
        opt = geometry.optimal_protocol(p["omega0"], p["omega_tau"], mdl["beta"], p["tau"], mdl["m"],
                                        mdl["kappa"], cfg["numerics"]["n_grid"])
        exp = lindblad.exponential_protocol(p["omega0"], p["omega_tau"], p["tau"])
        L = geometry.thermodynamic_length(p["omega0"], p["omega_tau"], mdl["beta"], mdl["m"],
                                          mdl["kappa"]).length
        summary["W_ex_opt"] = _excess_work(cfg, opt)[1][2]
        summary["W_ex_exp"] = _excess_work(cfg, exp)[1][2]
        summary["L2_over_tau"] = L * L / p["tau"]
    _dump_json(os.path.join(out, "excess_work.json"), summary)
    return summary


def run_geodesic(cfg, model, out, fmt):
    mdl, p = cfg["model"], cfg["protocol"]
    w0, w1 = p["omega0"], p["omega_tau"]
    lo, hi = sorted((w0, w1))
    grid = np.geomspace(lo, hi, cfg["geodesic"]["n_metric"])
    rows = []
    for w in grid:
        ms = geometry.metric(w, mdl["beta"], mdl["m"], mdl["kappa"])
        rows.append((ms.omega, ms.g, ms.sqrt_g))
    _write_rows(os.path.join(out, "metric.csv"), ["omega", "g", "sqrt_g"], rows, fmt)
    length = geometry.thermodynamic_length(w0, w1, mdl["beta"], mdl["m"], mdl["kappa"],
                                           cfg["numerics"]["n_grid"]).length
    opt = geometry.optimal_protocol(w0, w1, mdl["beta"], p["tau"], mdl["m"], mdl["kappa"],
                                    cfg["numerics"]["n_grid"])
    ref = geometry.table1_protocol(p["case"], w0, w1, p["tau"])
    ss = np.linspace(0, 1, 201)
    rows = [(float(s), opt.schedule(s), ref.schedule(s)) for s in ss]
    _write_rows(os.path.join(out, "protocol.csv"), ["s", "omega_opt", "omega_table1_case"], rows, fmt)
    err = max(abs(a - b) / b for _, a, b in rows)
    summary = {"length": length, "table1_case": p["case"], "max_rel_deviation_from_case": err}
    _dump_json(os.path.join(out, "geodesic.json"), summary)
    return summary


RUNNERS = {
    "validate": run_validate,
    "evolve": run_evolve,
    "fcs": run_fcs,
    "excess-work": run_excess_work,
    "geodesic": run_geodesic,
}


def run(cfg: RunConfig, out: str) -> dict:
    """Execute one non-sweep scenario into ``out`` and write its manifest."""
    os.makedirs(out, exist_ok=True)
    fmt = cfg["output"]["float_format"]
    model = build_model(cfg)
    summary = RUNNERS[cfg.scenario](cfg, model, out, fmt)
    manifest = {
        "version": __version__,
        "scenario": cfg.scenario,
        "config": cfg.canonical(),
        "config_sha256": cfg.digest(),
        "truncation": truncation_report(cfg, model),
        "tolerances": {"rtol": cfg["numerics"]["rtol"], "trace": lindblad.TRACE_TOL,
                       "positivity_floor": lindblad.POSITIVITY_FLOOR},
        "files": sorted(f for f in os.listdir(out) if f != "manifest.json"),
    }
    _dump_json(os.path.join(out, "manifest.json"), manifest)
    return summary


# --------------------------------------------------------------------------
# sweeps


def _sweep_point(args):
    raw, out = args
    try:
        return {"ok": True, "summary": run(from_dict(raw), out)}
    except Exception as exc:  # isolate per-point failures
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _scalar_columns(summaries):
    keys = []
    for s in summaries:
        for k, v in (s or {}).items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and k not in keys:
                keys.append(k)
    return sorted(keys)


def sweep(cfg: RunConfig, out: str, workers=None) -> dict:
    axes = cfg["sweep"]["axes"]
    names = list(axes)
    combos = list(itertools.product(*[axes[n] for n in names])) if names else [()]
    base = cfg.canonical()
    base["scenario"] = cfg["sweep"]["scenario"]
    jobs = []
    for i, combo in enumerate(combos):
        raw = json.loads(json.dumps(base))
        for dotted, val in zip(names, combo):
            sec, key = dotted.split(".")
            raw[sec][key] = val
        jobs.append((raw, os.path.join(out, f"point_{i:03d}")))
    os.makedirs(out, exist_ok=True)
    workers = workers or cfg["sweep"]["workers"]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    summaries = [r.get("summary") for r in results]
    cols = _scalar_columns(summaries)
    short = [n.split(".")[1] for n in names]
    rows = []
    for combo, r in zip(combos, results):
        vals = [float(v) if isinstance(v, (int, float)) else v for v in combo]
        s = r.get("summary") or {}
        rows.append(vals + [float(s[c]) if c in s else float("nan") for c in cols] + ["ok" if r["ok"] else "failed"])
    header = short + cols + ["status"]
    if names == ["model.dim"] and "chi_at_ft_point" in cols:
        idx = header.index("chi_at_ft_point")
        for j, row in enumerate(rows):
            nxt = rows[j + 1][idx] if j + 1 < len(rows) else float("nan")
            row.insert(-1, abs(row[idx] - nxt))
        header.insert(-1, "chi_change_to_next_dim")
    _write_rows(os.path.join(out, "aggregate.csv"), header, rows, cfg["output"]["float_format"])
    failed = [{"point": i, "values": dict(zip(names, combos[i])), "error": r["error"]}
              for i, r in enumerate(results) if not r["ok"]]
    report = {"points": len(jobs), "failed": failed, "axes": {n: axes[n] for n in names}}
    _dump_json(os.path.join(out, "sweep.json"), report)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump({"version": __version__, "scenario": "sweep", "config": cfg.canonical(),
                   "config_sha256": cfg.digest(), "points": len(jobs)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="lindthermo", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", help="TOML run configuration (defaults used when omitted)")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--dim", type=int, help="Fock truncation (overrides model.dim)")
    ap.add_argument("--rtol", type=float, help="integrator tolerance (overrides numerics.rtol)")
    ap.add_argument("--workers", type=int, help="sweep worker processes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> RunConfig:
    base = load_raw(args.config) if args.config else {}
    if base.get("scenario", args.scenario) != args.scenario:
        raise ConfigError(f"scenario: file says {base['scenario']!r} but the command line asks for {args.scenario!r}")
    base["scenario"] = args.scenario
    if args.dim is not None:
        base.setdefault("model", {})["dim"] = args.dim
    if args.rtol is not None:
        base.setdefault("numerics", {})["rtol"] = args.rtol
    return from_dict(base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg["output"]["dir"]
    try:
        if cfg.scenario == "sweep":
            report = sweep(cfg, out, args.workers)
            print(json.dumps({"points": report["points"], "failed": len(report["failed"])}))
            return EXIT_PARTIAL if report["failed"] else EXIT_OK
        summary = run(cfg, out)
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (IntegrationError, DegenerateSteadyState, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure in {type(exc).__module__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # parameters that pass the schema but not the model, e.g. equal geodesic endpoints
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
