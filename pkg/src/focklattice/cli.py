"""Batch command-line front end.

One JSON job in, one JSON report out (grids go to CSV).  Every report
echoes the configuration, tolerances, seed and version so runs can be
audited and reproduced byte-for-byte.

Exit codes: 0 success, 2 schema error, 3 numerical failure, 4 acceptance
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .acceptance import run_acceptance
from .classifier import TraceData, cached_t, classify
from .errors import FockLatticeError, NumericalError, SchemaError
from .interpolate import make_interpolant, reconstruct_inf, verify_interpolation
from .lattice import (GridSpec, Lattice, explicit_lattice, shells_for,
                      square_lattice, upper_density)
from .multiplier import (Multiplier, builtin_sigma_multiplier, sigma_weighted_mag,
                         user_multiplier)
from .transforms import PvConfig, operator_norm_estimate
from .weights import WeightProfile, ap_probe, choose_N, default_ap_radii, phi

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


def _load_job(path: str) -> dict:
    try:
        with open(path) as fh:
            job = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read job file: {exc}")
    if not isinstance(job, dict):
        raise SchemaError("job must be a JSON object")
    return job


def _complex_of(obj, what: str) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return complex(float(obj[0]), float(obj[1]))
    raise SchemaError(f"{what} must be a number or [re, im] pair")


def _build_weight(job: dict) -> WeightProfile:
    return WeightProfile.from_json(job.get("weight", {"kind": "classical"}))


def _build_lattice(job: dict, w: WeightProfile) -> Lattice:
    spec = job.get("lattice")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SchemaError("lattice must be an object with a 'kind'")
    if spec["kind"] == "square":
        try:
            return square_lattice(float(spec["R"]), w)
        except KeyError:
            raise SchemaError("square lattice needs R")
    if spec["kind"] == "explicit":
        pts = [complex(float(p[0]), float(p[1])) for p in spec.get("points", [])]
        return explicit_lattice(pts, w)
    raise SchemaError(f"unknown lattice kind {spec['kind']!r}")


def _build_multiplier(job: dict, lat: Lattice, w: WeightProfile) -> Multiplier:
    spec = job.get("multiplier", {"kind": "builtin_sigma"})
    if spec.get("kind") == "builtin_sigma":
        return builtin_sigma_multiplier(lat, w)
    if spec.get("kind") == "user_table":
        table = {int(e["index"]): complex(float(e["re"]), float(e["im"]))
                 for e in spec.get("g_prime", [])}
        g2 = spec.get("g_double_prime0")
        return user_multiplier(lat, w, table,
                               g_double_prime0=None if g2 is None
                               else _complex_of(g2, "g_double_prime0"),
                               weighted=bool(spec.get("weighted", False)))
    raise SchemaError("multiplier kind must be builtin_sigma or user_table")


def _build_values(job: dict, lat: Lattice, m: Multiplier, w: WeightProfile,
                  p) -> TraceData:
    spec = job.get("values", {"kind": "zero"})
    kind = spec.get("kind")
    if kind == "zero":
        return TraceData.zero(lat, m, w, p)
    if kind == "constant":
        return TraceData.constant(lat, m, w, p, _complex_of(spec.get("v", 1.0), "v"))
    if kind == "gaussian_trace":
        return TraceData.gaussian(lat, m, w, p, _complex_of(spec.get("w", 0.0), "w"))
    if kind == "list":
        vals = np.zeros(len(lat), dtype=complex)
        for e in spec.get("items", []):
            k = int(e["index"])
            if not 0 <= k < len(lat):
                raise SchemaError(f"value index {k} out of range")
            vals[k] = complex(float(e["re"]), float(e["im"]))
        if spec.get("weighted", False):
            return TraceData.from_weighted(lat, m, w, p, vals)
        return TraceData.from_raw(lat, m, w, p, vals)
    raise SchemaError(f"unknown values kind {kind!r}")


def _parse_p(job: dict):
    p = job.get("p", 2)
    if p == "inf":
        return math.inf
    p = float(p)
    if not p >= 1.0:
        raise SchemaError("p must be >= 1 or 'inf'")
    return p


def _pv_config(job: dict, args) -> PvConfig:
    pv = job.get("pv", {})
    tol = args.tolerance if args.tolerance is not None else pv.get("tolerance", 1e-9)
    mode = pv.get("center_mode", "origin")
    if mode not in ("origin", "center"):
        raise SchemaError("pv.center_mode must be origin or center")
    return PvConfig(rtol=float(tol), center_mode=mode)


def _report(command: str, args, job: dict, results: dict, t0: float,
            tolerances: Optional[dict] = None) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": args.seed,
        "threads": args.threads or os.environ.get("FOCKLATTICE_THREADS"),
        "config": job,
        "tolerances": tolerances or {},
        "timing_s": round(time.time() - t0, 3),
        "results": results,
    }


def _emit(report: dict, path: Optional[str]):
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj)}")


# -- commands ---------------------------------------------------------------


def cmd_lattice_info(args) -> int:
    t0 = time.time()
    job = _load_job(args.input)
    w = _build_weight(job)
    lat = _build_lattice(job, w)
    sched = shells_for(lat)
    results = {
        "n_points": len(lat),
        "truncation_radius": lat.truncation_radius,
        "scale": lat.scale,
        "delta_sep": lat.delta_sep,
        "n_shells": sched.n_shells,
        "first_shell_size": len(sched.members[1]) if sched.n_shells > 1 else 0,
        "max_rho": lat.max_rho,
    }
    r_max = job.get("density_r_max")
    if r_max is None:
        r_max = 0.45 * lat.truncation_radius / lat.max_rho
    results["upper_density"] = upper_density(lat, w, [float(r_max)])
    _emit(_report("lattice-info", args, job, results, t0), args.output)
    return EXIT_OK


def cmd_sigma_eval(args) -> int:
    t0 = time.time()
    job = _load_job(args.input)
    w = _build_weight(job)
    lat = _build_lattice(job, w)
    g = job.get("grid", {})
    half = float(g.get("half_width", lat.scale))
    n = int(g.get("n", 100))
    grid = GridSpec(-half, half, -half, half, n, n)
    pts = grid.points()
    tail = args.tail_R if args.tail_R is not None else lat.truncation_radius
    vals = sigma_weighted_mag(lat, pts.ravel(), tail_R=float(tail))
    with open(args.grid, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "weighted_mag"])
        for z, v in zip(pts.ravel(), vals):
            wr.writerow([f"{z.real:.12g}", f"{z.imag:.12g}", f"{v:.12g}"])
    results = {"grid_file": args.grid, "n_values": int(vals.size),
               "max_weighted_mag": float(np.max(vals)),
               "tail_R": float(tail)}
    _emit(_report("sigma-eval", args, job, results, t0), args.output)
    return EXIT_OK


def cmd_trace_check(args) -> int:
    t0 = time.time()
    job = _load_job(args.input)
    w = _build_weight(job)
    lat = _build_lattice(job, w)
    m = _build_multiplier(job, lat, w)
    p = _parse_p(job)
    data = _build_values(job, lat, m, w, p)
    cfg = _pv_config(job, args)
    verdict = classify(data, cfg)
    results = {
        "branch": {
            "case": verdict.branch.case,
            "p": "inf" if math.isinf(p) else p,
            "is_ap": verdict.branch.is_ap,
            "t_effective": verdict.branch.t_effective,
            "n_max": verdict.branch.n_max,
            "conditions": list(verdict.branch.condition_ids),
        },
        "overall": verdict.overall,
        "reports": [
            {
                "condition": rep.condition_id,
                "verdict": rep.verdict,
                "growth_exponent": rep.growth_exponent,
                "inner_unconverged": rep.inner_unconverged,
                "trajectory": [[r, v] for r, v in rep.partial_trajectory],
            }
            for rep in verdict.reports
        ],
    }
    tol = {"pv_rtol": cfg.rtol, "flatten_tol": 0.01,
           "diverge_exponent": 0.05, "diverge_r2": 0.9}
    _emit(_report("trace-check", args, job, results, t0, tol), args.output)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    t0 = time.time()
    job = _load_job(args.input)
    w = _build_weight(job)
    lat = _build_lattice(job, w)
    m = _build_multiplier(job, lat, w)
    p = _parse_p(job)
    data = _build_values(job, lat, m, w, p)
    cfg = _pv_config(job, args)
    if math.isinf(p):
        w0 = job.get("w0")
        I = reconstruct_inf(data, None if w0 is None else _complex_of(w0, "w0"),
                            cfg)
    else:
        I = make_interpolant(data, cfg)
    g = job.get("grid", {})
    half = float(g.get("half_width", min(4.0, lat.guard_radius())))
    n = int(g.get("n", 60))
    grid = GridSpec(-half, half, -half, half, n, n)
    pts = grid.points().ravel()
    vals_w = I.eval_weighted(pts)
    phis = np.asarray(phi(w, pts), dtype=float)
    with open(args.grid, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "re_f", "im_f", "weighted_mag"])
        for z, vw, ph in zip(pts, vals_w, phis):
            raw = vw * math.e ** min(ph, 700.0)
            wr.writerow([f"{z.real:.12g}", f"{z.imag:.12g}",
                         f"{raw.real:.12g}", f"{raw.imag:.12g}",
                         f"{abs(vw):.12g}"])
    residual = verify_interpolation(I, max_points=int(job.get("verify_points", 80)))
    results = {"grid_file": args.grid, "max_weighted_residual": residual,
               "mode": I.mode, "w0": I.w0,
               "representative_only": I.representative_only}
    _emit(_report("reconstruct", args, job, results, t0,
                  {"residual_target": 1e-3}), args.output)
    return EXIT_OK


def cmd_ap_probe(args) -> int:
    t0 = time.time()
    job = _load_job(args.input)
    w = _build_weight(job)
    p = _parse_p(job)
    if math.isinf(p) or p <= 1.0:
        raise SchemaError("ap-probe needs 1 < p < inf")
    radii = job.get("radii")
    radii = default_ap_radii(w) if radii is None else [float(r) for r in radii]
    rep = ap_probe(w, p, radii)
    results = {"p": p, "disc_radii": list(rep.disc_radii),
               "ratios": list(rep.ratios),
               "fitted_exponent": rep.fitted_exponent,
               "is_ap": rep.is_ap}
    _emit(_report("ap-probe", args, job, results, t0,
                  {"exponent_tolerance": rep.exponent_tolerance}), args.output)
    return EXIT_OK


def cmd_op_norm(args) -> int:
    t0 = time.time()
    job = _load_job(args.input)
    w = _build_weight(job)
    op = job.get("op", "B")
    if op not in ("B", "L", "M"):
        raise SchemaError("op must be B, L or M")
    sizes = [int(s) for s in job.get("sizes", [200, 800, 3200])]
    p = _parse_p(job)
    N = int(job.get("N", choose_N(cached_t(w))))
    rep = operator_norm_estimate(op, sizes, p, w, N=N,
                                 trials=int(job.get("trials", 2)),
                                 seed=args.seed)
    results = {"op": rep.op, "p": "inf" if math.isinf(p) else p,
               "sizes": list(rep.sizes), "norms": list(rep.norms),
               "growth_ratio": rep.growth_ratio}
    _emit(_report("op-norm", args, job, results, t0), args.output)
    return EXIT_OK


def cmd_acceptance(args) -> int:
    t0 = time.time()
    numbers = None
    if args.criteria:
        numbers = [int(k) for k in args.criteria.split(",")]
    results = run_acceptance(numbers)
    ok = all(r.passed for r in results)
    report = {
        "command": "acceptance",
        "version": __version__,
        "seed": args.seed,
        "timing_s": round(time.time() - t0, 3),
        "results": [
            {"criterion": r.number, "title": r.title, "passed": r.passed,
             "details": r.details, "elapsed_s": round(r.elapsed_s, 2)}
            for r in results
        ],
        "all_passed": ok,
    }
    if args.output:
        _emit(report, args.output)
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="focklattice",
        description="Trace checks, interpolation and transform probes on "
                    "critical Fock-space lattices.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="recorded in reports; numerical kernels use "
                             "the BLAS/FFT thread pool")
    parser.add_argument("--tail-R", dest="tail_R", type=float, default=None)
    parser.add_argument("--tolerance", type=float, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_grid=False, needs_input=True):
        sp = sub.add_parser(name)
        if needs_input:
            sp.add_argument("--input", required=True)
        sp.add_argument("--output", default=None)
        if needs_grid:
            sp.add_argument("--grid", required=True)
        sp.set_defaults(fn=fn)
        return sp

    add("lattice-info", cmd_lattice_info)
    add("sigma-eval", cmd_sigma_eval, needs_grid=True)
    add("trace-check", cmd_trace_check)
    add("reconstruct", cmd_reconstruct, needs_grid=True)
    add("ap-probe", cmd_ap_probe)
    add("op-norm", cmd_op_norm)
    sp = sub.add_parser("acceptance")
    sp.add_argument("--criteria", default=None,
                    help="comma-separated criterion numbers (default: all)")
    sp.add_argument("--output", default=None)
    sp.set_defaults(fn=cmd_acceptance)

    args = parser.parse_args(argv)
    np.random.seed(args.seed)
    try:
        return args.fn(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FockLatticeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    raise SystemExit(main())
