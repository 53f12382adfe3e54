"""Command-line front end.

    kahlerlab <command> --config job.json --out DIR [--parallel N]

A config holding a JSON list is a sweep: each entry runs as its own job in
DIR/job-NNN and DIR/sweep.json lists the exit codes in input order.  Every
job writes results.json (deterministic payload), report.json (the same
plus wall time) and plot-ready CSV files.  Exit codes: 0 success,
2 validation failure, 3 solver non-convergence, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import fibration as fl
from . import kstability as ks
from . import metric_models as mm
from . import polytope as pc
from . import psh
from .errors import KahlerLabError, NonConvergenceError, ValidationError
from .ma_engine import (CONVENTIONS, ContinuityPath, RadialProfile, continuity_path_run, gauss_bonnet,
                        ke_solve_radial, kr_flow_run, round_profile, soliton_solve_radial)
from .ma_engine.profile import football_density, make_grid
from .rational import parse, to_str

COMMANDS = ("futaki", "ehrhart", "cm", "lelong", "threshold", "alpha", "model", "ke", "soliton",
            "continuity", "flow", "wp", "foliation", "residual")
SCHEMA_VERSION = "1"


# serialization

def to_jsonable(x):
    if isinstance(x, Fraction):
        return to_str(x)
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "to_json"):
        return to_jsonable(x.to_json())
    raise TypeError(f"cannot serialize {type(x).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _profile_rows(p: RadialProfile):
    return p.csv_rows()


PROFILE_HEADER = ["s", "f", "ricci", "scal"]


# command handlers: inputs dict -> (payload, tolerance, {csv name: (header, rows)})

def _poly(inputs, key="polytope"):
    if key not in inputs:
        raise ValidationError(f"inputs need a {key!r} entry")
    return pc.LatticePolytope.from_json(inputs[key])


def cmd_futaki(inputs):
    tc = ks.ToricTestConfiguration.from_json(inputs)
    h = ks.hilbert_coefficients(tc.base_polytope)
    w = ks.weight_coefficients(tc)
    fut = ks.futaki_from_coefficients(h, w)
    rep = ks.DFReport(fut, ks._verdict(fut))
    n = tc.base_polytope.dim
    rows = [[k, str(ks.weight_trace(tc, k))] for k in range(1, n + 4)]
    payload = dict(rep.to_json(), a0=h.a0, a1=h.a1, b0=w.b0, b1=w.b1, configuration=tc.to_json())
    return payload, "exact", {"weight_trace.csv": (["k", "trace"], rows)}


def cmd_ehrhart(inputs):
    P = _poly(inputs)
    k_max = int(inputs.get("k_max", 8))
    poly = pc.ehrhart_fit(P)
    rows = [[k, pc.lattice_point_count(P, k), str(poly(k))] for k in range(1, k_max + 1)]
    mismatches = [r[0] for r in rows if Fraction(r[2]) != r[1]]
    return ({"polynomial": poly.to_json(), "k_max": k_max, "mismatches": mismatches, "volume": pc.volume(P)},
            "exact", {"counts.csv": (["k", "brute_force", "polynomial"], rows)})


def cmd_cm(inputs):
    if "product_family" in inputs:
        terms = ks.product_family_terms(_poly(inputs["product_family"], "fiber"))
    else:
        terms = {k: inputs[k] for k in ("relcanonical_term", "polarization_term", "n") if k in inputs}
        if len(terms) < 3:
            raise ValidationError("cm needs relcanonical_term, polarization_term and n (or product_family)")
        terms["n"] = int(terms["n"])
        if "eta" in inputs:
            terms["eta"] = inputs["eta"]
        elif "fiber" in inputs:
            terms["eta"] = ks.eta_constant(_poly(inputs, "fiber"))
        else:
            raise ValidationError("cm needs eta or a fiber polytope")
        terms = {k: (parse(v) if k != "n" else v) for k, v in terms.items()}
    cm = ks.cm_degree(terms["relcanonical_term"], terms["polarization_term"], terms["n"], terms["eta"])
    return dict(terms, cm_degree=cm), "exact", {}


def cmd_lelong(inputs):
    w = psh.PshWeight.from_json(inputs["weight"])
    pt = psh._read_point(inputs.get("point", [0.0] * (2 * w.dim)), w.dim)
    est = psh.lelong_number(w, pt)
    rows = [[r, m] for r, m in zip(est.r_schedule, est.masses)]
    return est.to_json(), {"extrapolation": 1e-2, "agreement": 2e-2}, {"masses.csv": (["r", "mass_ratio"], rows)}


def cmd_threshold(inputs):
    w = psh.PshWeight.from_json(inputs["weight"])
    est = psh.integrability_threshold(w, alpha_max=float(inputs.get("alpha_max", psh.DEFAULT_ALPHA_MAX)))
    return est.to_json(), {"bracket_relative_width": 0.02}, {}


def cmd_alpha(inputs):
    ws = [psh.PshWeight.from_json(d) for d in inputs.get("weights", [])]
    fd = inputs.get("fiber_dim")
    est = psh.alpha_over_family(ws, None, inputs.get("mode", "absolute"), None if fd is None else int(fd),
                                float(inputs.get("alpha_max", psh.DEFAULT_ALPHA_MAX)))
    return est.to_json(), {"bracket_relative_width": 0.02}, {}


def _model_sampler(spec):
    kind = spec.get("kind")
    n = int(spec.get("n", 1))
    if kind == "conical":
        m = mm.ConicalModelMetric(float(spec["beta"]), n)
    elif kind in ("poincare", "fibrewise-conical"):
        t = fl._complex(spec.get("t", [0.5, 0.0]))
        m = mm.FibrewiseModelMetric("poincare" if kind == "poincare" else "conical", n, t)
    elif kind == "football":
        return mm.football_metric(float(spec["beta"])), 1
    else:
        raise ValidationError(f"unknown model kind {kind!r}")
    return m.sample, n


def cmd_model(inputs):
    model, n = _model_sampler(inputs.get("model", {}))
    region = dict(inputs.get("region", {"r_min": 0.01, "r_max": 0.5}))
    region.setdefault("dim", n)
    pts = mm.log_spaced_points(float(region["r_min"]), float(region["r_max"]), int(region.get("n_rad", 8)),
                               int(region.get("n_ang", 4)), int(region["dim"]))
    samples = mm.sample_grid(model, pts)
    header = []
    for k in range(n):
        header += [f"z{k + 1}_re", f"z{k + 1}_im"]
    header += [f"h{a}{b}_{part}" for a in range(1, n + 1) for b in range(1, n + 1) for part in ("re", "im")]
    payload = {"samples": len(samples), "all_positive": all(s.is_positive() for s in samples)}
    cand = inputs.get("candidate")
    if cand is not None:
        if cand.get("kind") == "scaled":
            factor = float(cand.get("factor", 1.0))
            candidate = (lambda p, f=factor: mm.MetricSample(model(p).point, f * model(p).matrix))
        else:
            candidate, _ = _model_sampler(cand)
        lo, hi = mm.quasi_isometry_constants(model, candidate, region)
        payload.update(c=lo, C=hi)
    return payload, {"quasi_isometry_relative": 0.01}, {"samples.csv": (header, [s.csv_row() for s in samples])}


def _cone(inputs):
    c = inputs.get("cone", [1.0, 1.0])
    if len(c) != 2:
        raise ValidationError("cone needs two angles")
    return float(c[0]), float(c[1])


def _profile_summary(p: RadialProfile):
    return {"area": p.area(), "gauss_bonnet": gauss_bonnet(p), "asymptotic_spread": list(p.asymptotic_spread()),
            "nodes": len(p.s), "half_width": float(p.s[-1]), "cone": list(p.cone),
            "solver": {k: v for k, v in p.metadata.items() if k != "conventions"}}


def cmd_ke(inputs):
    kw = {}
    if "total_area" in inputs:
        kw["total_area"] = float(inputs["total_area"])
    if "nodes" in inputs:
        kw["nodes"] = int(inputs["nodes"])
    p = ke_solve_radial(_cone(inputs), **kw)
    return _profile_summary(p), {"newton_sup_residual": 1e-8}, {"profile.csv": (PROFILE_HEADER, _profile_rows(p))}


def cmd_soliton(inputs):
    p, data = soliton_solve_radial(_cone(inputs), bool(inputs.get("search", True)),
                                   float(inputs.get("coefficient", 0.0)))
    payload = dict(_profile_summary(p), vector_field_coefficient=data.vector_field_coefficient,
                   contraction_defect=data.contraction_defect(p))
    rows = [r + [float(t)] for r, t in zip(_profile_rows(p), data.theta_potential)]
    return payload, {"newton_sup_residual": 1e-8}, {"profile.csv": (PROFILE_HEADER + ["theta"], rows)}


def cmd_continuity(inputs):
    path = ContinuityPath.from_json(inputs)
    ini = inputs.get("initial", {})
    initial = round_profile(float(ini.get("half_width", 40.0)), int(ini.get("nodes", 2048)))
    p = continuity_path_run(path, initial)
    steps = p.metadata["continuity"]["steps"]
    rows = [[t["epsilon"], t["residual"], t["iterations"], t["normalizing_constant"], t["c0_bound"],
             "" if t["sup_distance_to_previous"] is None else t["sup_distance_to_previous"]] for t in steps]
    payload = {"steps": steps, "final_area": p.area(), "reference_area": initial.area()}
    return payload, {"newton_sup_residual": path.tol}, {
        "profile.csv": (PROFILE_HEADER, _profile_rows(p)),
        "path.csv": (["epsilon", "residual", "iterations", "normalizing_constant", "c0_bound",
                      "sup_distance_to_previous"], rows)}


def _flow_initial(ini):
    cone = _cone(ini)
    kind = ini.get("kind", "ke")
    if kind == "ke":
        base = ke_solve_radial(cone)
    elif kind == "football":
        s = make_grid(8.0 / min(cone), int(ini.get("nodes", 2048)))
        base = RadialProfile(s, football_density(s, cone[0]), cone)
    else:
        raise ValidationError(f"unknown initial profile kind {kind!r}")
    eps = float(ini.get("perturbation", 0.0))
    dens = base.density * float(ini.get("scale", 1.0)) * (1 + eps / np.cosh(base.s))
    return RadialProfile(base.s, dens, cone)


def cmd_flow(inputs):
    initial = _flow_initial(inputs.get("initial", {}))
    states = kr_flow_run(initial, float(inputs.get("phi", 1.0)), float(inputs.get("t_end", 5.0)),
                         float(inputs.get("dt", 0.05)), float(inputs.get("soliton_coefficient", 0.0)))
    every = int(inputs.get("csv_every", 10))
    hist = [[st.time, st.residual_norm, st.phi, st.profile.area()] for st in states]
    traj = []
    for k, st in enumerate(states):
        if k % every == 0 or k == len(states) - 1:
            traj += [[st.time] + r for r in _profile_rows(st.profile)]
    final = states[-1]
    payload = {"steps": len(states) - 1, "final_time": final.time, "final_residual": final.residual_norm,
               "final_phi": final.phi, "area_initial": states[0].profile.area(), "area_final": final.profile.area()}
    if inputs.get("compare_to_ke", True):
        try:
            ke = ke_solve_radial(initial.cone)
            if ke.s.shape == final.profile.s.shape:
                payload["sup_distance_to_ke"] = final.profile.sup_distance(ke)
        except NonConvergenceError:
            payload["sup_distance_to_ke"] = None
    return payload, {"area_per_unit_time": 1e-6, "fixed_point_sup": 1e-5}, {
        "residuals.csv": (["time", "residual", "phi", "area"], hist),
        "trajectory.csv": (["time"] + PROFILE_HEADER, traj)}


def cmd_wp(inputs):
    fam = fl.FamilyDescriptor.from_json(inputs["family"])
    rows, worst = [], 0.0
    for s in fam.base_grid.interior_points():
        a = fl.wp_fiber_integral(fam, s)
        b = fl.wp_via_ks_norm(fam, s)
        rows.append([s.real, s.imag, a.wp_density, b.wp_density])
        if b.wp_density > 1e-12:
            worst = max(worst, abs(a.wp_density - b.wp_density) / b.wp_density)
    return ({"points": len(rows), "max_relative_disagreement": worst,
             "min_wp": min(min(r[2], r[3]) for r in rows)},
            {"estimator_agreement": 0.05, "nonnegativity": 1e-10},
            {"wp.csv": (["s_re", "s_im", "wp_fiber_integral", "wp_ks_norm"], rows)})


def cmd_foliation(inputs):
    fam = fl.FamilyDescriptor.from_json(inputs["family"])
    rep = fl.foliation_report(fam)
    rows = [[e.s.real, e.s.imag, e.rank, e.horizontal_coefficient] for e in rep.entries]
    return ({"leaf_indicator": rep.leaf_indicator, "fiber_dim": rep.fiber_dim,
             "ranks": sorted({e.rank for e in rep.entries})},
            {"null_eigenvalue": fl.NULL_TOL}, {"foliation.csv": (["s_re", "s_im", "rank", "c"], rows)})


def cmd_residual(inputs):
    case = inputs.get("case", "torus")
    if case == "product":
        out = fl.product_relative_ke_residual(h=float(inputs.get("h", 0.02)))
        tol = 1e-6
    elif case == "torus":
        fam = fl.FamilyDescriptor.from_json(inputs["family"])
        h = inputs.get("h")
        out = fl.torus_relative_ke_residual(fam, inputs.get("regime", "general"), None if h is None else float(h))
        tol = 5e-3
    elif case == "horizontal":
        fam = fl.FamilyDescriptor.from_json(inputs["family"])
        s = fl._complex(inputs.get("s", fam.base_grid.center))
        out = fl.horizontal_c_residual(fam, s).to_json()
        tol = 0.05
    else:
        raise ValidationError(f"unknown residual case {case!r}")
    return out, {"residual": tol}, {}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# job execution

def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValidationError):
        return 2
    if isinstance(exc, NonConvergenceError):
        return 3
    return 4


def reason_for(exc: BaseException) -> str:
    return getattr(exc, "reason", "internal-error") if isinstance(exc, KahlerLabError) else "internal-error"


def split_config(command: str, config) -> tuple[dict, dict]:
    if not isinstance(config, dict):
        raise ValidationError("job config must be a JSON object")
    if "command" in config and config["command"] != command:
        raise ValidationError(f"config is for {config['command']!r}, not {command!r}")
    if "inputs" in config:
        inputs = config["inputs"]
    else:
        inputs = {k: v for k, v in config.items() if k not in ("command", "seed", "tolerances")}
    extra = {"seed": config.get("seed", 0), "tolerances": config.get("tolerances", {})}
    if not isinstance(extra["seed"], int):
        raise ValidationError("seed must be an integer")
    return inputs, extra


def run(command: str, config, out_dir) -> tuple[int, str, str]:
    """Run one job; returns (exit code, reason, one-line message)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    chash = config_hash(config) if _hashable(config) else None
    code, reason, message = 0, "ok", ""
    result = None
    try:
        if command not in HANDLERS:
            raise ValidationError(f"unknown command {command!r}")
        inputs, extra = split_config(command, config)
        payload, tolerance, csvs = HANDLERS[command](inputs)
        if extra["tolerances"]:
            tolerance = {"default": tolerance, "overrides": extra["tolerances"]}
        result = {"command": command, "config_hash": chash, "conventions": CONVENTIONS,
                  "seed": extra["seed"], "tolerance": tolerance, "payload": payload}
        for name, (header, rows) in csvs.items():
            write_csv(out / name, header, rows)
    except KahlerLabError as exc:
        code, reason, message = exit_code_for(exc), reason_for(exc), str(exc)
    except (KeyError, TypeError, ValueError) as exc:
        code, reason, message = 2, "validation-failed", f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # noqa: BLE001 - anything else is an internal error
        code, reason, message = 4, "internal-error", f"{type(exc).__name__}: {exc}"
    results_doc = result if result is not None else {
        "command": command, "config_hash": chash, "conventions": CONVENTIONS, "error": {"reason": reason,
                                                                                      "message": message}}
    (out / "results.json").write_text(json.dumps(to_jsonable(results_doc), sort_keys=True, indent=2) + "\n")
    report = {"schema_version": SCHEMA_VERSION, "command": command, "config_hash": chash,
              "conventions": CONVENTIONS, "exit_code": code, "reason": reason, "message": message,
              "results": to_jsonable(results_doc), "wall_time_s": time.perf_counter() - start}
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return code, reason, message


def _hashable(config) -> bool:
    try:
        canonical_json(config)
        return True
    except TypeError:
        return False


def _run_job(args):
    return run(*args)


def sweep(command: str, configs: list, out_dir, parallel: int = 1) -> list[tuple[int, str, str]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(command, cfg, str(out / f"job-{i:03d}")) for i, cfg in enumerate(configs)]
    if parallel <= 1 or len(jobs) <= 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_job, jobs))
    summary = [{"index": i, "exit_code": c, "reason": r, "config_hash": config_hash(cfg) if _hashable(cfg) else None}
               for i, ((c, r, _), cfg) in enumerate(zip(results, configs))]
    (out / "sweep.json").write_text(json.dumps({"command": command, "jobs": summary,
                                                "exit_code": max((c for c, _, _ in results), default=0)},
                                               sort_keys=True, indent=2) + "\n")
    return results


def _stderr_line(command, code, reason, message):
    msg = json.dumps(" ".join(message.split()))
    print(f"kahlerlab: command={command} exit={code} reason={reason} message={msg}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kahlerlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="job config JSON (a list runs a sweep)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--parallel", type=int, default=1, help="sweep width")
    args = parser.parse_args(argv)
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _stderr_line(args.command, 2, "validation-failed", f"cannot read config: {exc}")
        return 2
    if args.parallel < 1:
        _stderr_line(args.command, 2, "validation-failed", "--parallel must be positive")
        return 2
    if isinstance(config, list):
        results = sweep(args.command, config, args.out, args.parallel)
        for i, (code, reason, message) in enumerate(results):
            if code:
                _stderr_line(f"{args.command}[{i}]", code, reason, message)
        return max((c for c, _, _ in results), default=0)
    code, reason, message = run(args.command, config, args.out)
    if code:
        _stderr_line(args.command, code, reason, message)
    return code


if __name__ == "__main__":
    sys.exit(main())
