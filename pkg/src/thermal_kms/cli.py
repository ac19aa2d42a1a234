"""Batch front end: named cases, parameter sweeps, JSON/CSV output.

Configuration is a flat ``key = value`` file with dotted keys
(``cutoff.kind``, ``quad.tol_rel``, ...); command-line flags with the same
names override it. Output is written to ``--out`` (default: current
directory) as ``results.json`` and, for sweeps, ``results.csv``.

Exit status: 0 on success, 2 on usage errors, 3 on domain or divergence
errors, 4 when a quadrature missed its tolerance (results are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import casestudies as cs
from . import graphs as gr
from . import propagators as pg
from .cutoff import KINDS, CutoffFamily
from .expansion import AssemblyError, ExpansionError, evaluate_terms, expansion_terms
from .quadrature import (DEFAULT_MATSUBARA_N, DEFAULT_TOL_ABS, DEFAULT_TOL_REL, DivergentIntegralError,
                         QuadratureError, parallel_map)

EXIT_USAGE, EXIT_DOMAIN, EXIT_BUDGET = 2, 3, 4

# key -> (type, default)
KEYS = {
    "case": (str, None),
    "beta": (float, 1.0),
    "mass": (float, 1.0),
    "coupling": (float, 1.0),
    "renorm_c": (float, 0.0),
    "p": (float, 0.0),
    "t": (float, 0.0),
    "dt": (float, 0.0),
    "u": (float, -0.5),
    "branches": (str, "1,1"),
    "kernel": (str, "thermal"),
    "degrees": (str, None),
    "form": (str, None),
    "p0_cut": (float, 200.0),
    "m_cuts": (str, "10,100,1000"),
    "cutoff.kind": (str, "raised_cosine"),
    "cutoff.epsilon": (float, 1.0),
    "cutoff.t0": (float, 0.0),
    "cutoff.scale_n": (float, 1.0),
    "quad.tol_rel": (float, DEFAULT_TOL_REL),
    "quad.tol_abs": (float, DEFAULT_TOL_ABS),
    "quad.matsubara_N": (int, DEFAULT_MATSUBARA_N),
    "sweep.axis": (str, None),
    "sweep.min": (float, None),
    "sweep.max": (float, None),
    "sweep.steps": (int, 5),
    "sweep.scale": (str, "linear"),
}

SWEEP_AXES = ("beta", "mass", "p", "renorm_c", "t", "dt", "cutoff.scale_n", "cutoff.epsilon")


class UsageError(ValueError):
    pass


def _alias(name: str) -> str:
    # tolerate renorm.c / c / cutoff.kind spelled with dashes
    name = name.replace("-", "_")
    return {"c": "renorm_c", "renorm.c": "renorm_c", "params.beta": "beta", "params.mass": "mass",
            "quad.matsubara_n": "quad.matsubara_N"}.get(name, name)


def read_config(path: str | Path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        k = _alias(k)
        if k not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
        out[k] = v
    return out


def _coerce(key, value):
    typ, _ = KEYS[key]
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise UsageError(f"bad value {value!r} for {key}") from None


def resolve(file_cfg: dict, flags: dict) -> dict:
    cfg = {k: d for k, (_, d) in KEYS.items()}
    for src in (file_cfg, flags):
        for k, v in src.items():
            if v is not None:
                cfg[k] = _coerce(k, v)
    return cfg


def params_of(cfg) -> pg.ThermalParams:
    return pg.ThermalParams(cfg["beta"], cfg["mass"], cfg["coupling"], cfg["renorm_c"])


def cutoff_of(cfg) -> CutoffFamily:
    if cfg["cutoff.kind"] not in KINDS:
        raise UsageError(f"unknown cutoff kind {cfg['cutoff.kind']!r}; choose from {', '.join(KINDS)}")
    try:
        return CutoffFamily(cfg["cutoff.kind"], cfg["cutoff.epsilon"], cfg["cutoff.t0"], cfg["cutoff.scale_n"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _result(value, err, cfg, case, cutoff=True, **meta):
    meta = {"case": case, **meta}
    return cs.CaseResult(complex(value), float(err), params_of(cfg), cutoff_of(cfg) if cutoff else None, meta)


def _quad(r, cfg, case, cutoff=True, **meta):
    return _result(r.value, r.error, cfg, case, cutoff, budget_exceeded=bool(r.budget_exceeded), **meta)


# -- case registry

def case_phi2_F1(cfg):
    form = cfg["form"] or "corrected"
    val = cs.phi2_F1_hat(cfg["p"], params_of(cfg), form=form)
    return [_result(val, 0.0, cfg, "phi2-F1", cutoff=False, form=form, formula="closed")]


def case_phi2_F1_engine(cfg):
    r = evaluate_terms(expansion_terms(1, 2, 2), params_of(cfg), cutoff_of(cfg), ext_times=(cfg["t"], cfg["t"]),
                       p_vec=(0.0, 0.0, cfg["p"]), tol_rel=cfg["quad.tol_rel"], tol_abs=cfg["quad.tol_abs"])
    return [_quad(r, cfg, "phi2-F1-engine", terms="expansion_terms(order=1, arity=2, n_ext=2)")]


def case_phi2_A1(cfg):
    val = cs.phi2_A1_hat(cfg["t"], cfg["p"], params_of(cfg), cutoff_of(cfg))
    return [_result(val, 0.0, cfg, "phi2-A1", formula="closed")]


def case_phi2_B1(cfg):
    form = cfg["form"] or "corrected"
    val = cs.phi2_B1_hat(cfg["t"], cfg["dt"], cfg["p"], params_of(cfg), cutoff_of(cfg), form=form)
    return [_result(val, 0.0, cfg, "phi2-B1", form=form, formula="closed")]


def case_phi2_Btilde(cfg):
    r = cs.phi2_Btilde_inf_00(params_of(cfg), tol_rel=min(cfg["quad.tol_rel"], 1e-10))
    return [_quad(r, cfg, "phi2-Btilde", cutoff=False)]


def case_thermal_mass(cfg):
    r = cs.thermal_mass(params_of(cfg), tol_rel=min(cfg["quad.tol_rel"], 1e-10))
    return [_quad(r, cfg, "thermal-mass", cutoff=False)]


def case_phi3_F2(cfg):
    form = cfg["form"] or "displayed"
    r = cs.phi3_F2inf_00(params_of(cfg), cutoff_of(cfg), form=form, tol_rel=cfg["quad.tol_rel"])
    return [_quad(r, cfg, "phi3-F2", form=form)]


def case_phi3_Ainf(cfg):
    r = cs.phi3_Ainf(cfg["dt"], cfg["p"], params_of(cfg), cutoff_of(cfg), tol_rel=cfg["quad.tol_rel"])
    return [_quad(r, cfg, "phi3-Ainf")]


def case_phi3_Cinf(cfg):
    r = cs.phi3_Cinf(cfg["dt"], cfg["p"], params_of(cfg), cutoff_of(cfg), tol_rel=cfg["quad.tol_rel"])
    return [_quad(r, cfg, "phi3-Cinf")]


def case_phi3_Bc(cfg):
    return [_result(cs.phi3_Bc(params_of(cfg), cfg["p"]), 0.0, cfg, "phi3-Bc", cutoff=False, formula="closed")]


def case_phi3_Binf(cfg):
    r = cs.phi3_Binf_check(cfg["dt"], cfg["p"], params_of(cfg), cutoff_of(cfg), p0_cut=cfg["p0_cut"],
                           tol_rel=cfg["quad.tol_rel"])
    return [_quad(r, cfg, "phi3-Binf", p0_cut=cfg["p0_cut"])]


def case_heaviside(cfg):
    cuts = [float(x) for x in cfg["m_cuts"].split(",")]
    vals = cs.heaviside_witness(params_of(cfg), cutoff_of(cfg), M_cuts=cuts)
    return [_result(v, 0.0, cfg, "heaviside", M_cut=c) for c, v in zip(cuts, vals)]


def case_propagator(cfg):
    params, t, u, p = params_of(cfg), cfg["t"], cfg["u"], cfg["p"]
    kernel = cfg["kernel"]
    if kernel == "wightman":
        val = pg.wightman_mixed(t, u, p, params)
    elif kernel == "thermal":
        val = pg.thermal_mixed(t, u, p, params)
    elif kernel == "matrix":
        try:
            a, b = (int(x) for x in cfg["branches"].split(","))
        except ValueError:
            raise UsageError("branches must look like '1,2'") from None
        val = pg.realtime_matrix_entry(a, b, t, p, params)
    elif kernel == "matsubara":
        val = pg.matsubara_sum_closed(u, p, params)
    else:
        raise UsageError(f"unknown kernel {kernel!r}; choose wightman, thermal, matrix, matsubara")
    return [_result(val, 0.0, cfg, "propagator", cutoff=False, kernel=kernel, t=t, u=u)]


def case_graphs(cfg):
    if not cfg["degrees"]:
        raise UsageError("graphs needs --degrees, e.g. --degrees 1,1,3,3")
    try:
        degrees = [int(x) for x in cfg["degrees"].split(",")]
    except ValueError:
        raise UsageError(f"bad degree list {cfg['degrees']!r}") from None
    return {"degrees": degrees,
            "graphs": [{**g.to_json_obj(), "symmetry_factor": gr.symmetry_factor(g)}
                       for g in gr.enumerate_connected(degrees)]}


CASES = {
    "phi2-F1": case_phi2_F1,
    "phi2-F1-engine": case_phi2_F1_engine,
    "phi2-A1": case_phi2_A1,
    "phi2-B1": case_phi2_B1,
    "phi2-Btilde": case_phi2_Btilde,
    "thermal-mass": case_thermal_mass,
    "phi3-F2": case_phi3_F2,
    "phi3-Ainf": case_phi3_Ainf,
    "phi3-Cinf": case_phi3_Cinf,
    "phi3-Bc": case_phi3_Bc,
    "phi3-Binf": case_phi3_Binf,
    "heaviside": case_heaviside,
    "propagator": case_propagator,
    "graphs": case_graphs,
}

# subcommand -> (case prefix, default quantity)
SHORTCUTS = {"phi2": ("phi2-", "F1"), "phi3": ("phi3-", "F2")}


# -- output

def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=True) + "\n")


def _config_json(cfg):
    return {k: v for k, v in sorted(cfg.items()) if v is not None}


def sweep_points(cfg) -> list[float]:
    axis = cfg["sweep.axis"]
    if axis not in SWEEP_AXES:
        raise UsageError(f"sweep.axis must be one of {', '.join(SWEEP_AXES)}")
    lo, hi, n = cfg["sweep.min"], cfg["sweep.max"], cfg["sweep.steps"]
    if lo is None or hi is None or n < 1:
        raise UsageError("sweep needs sweep.min, sweep.max and sweep.steps >= 1")
    if cfg["sweep.scale"] == "log":
        if lo <= 0 or hi <= 0:
            raise UsageError("log sweep needs positive bounds")
        return [float(x) for x in np.geomspace(lo, hi, n)]
    if cfg["sweep.scale"] != "linear":
        raise UsageError("sweep.scale is linear or log")
    return [float(x) for x in np.linspace(lo, hi, n)]


def run_case(cfg) -> list[cs.CaseResult]:
    case = cfg["case"]
    if case not in CASES or case == "graphs":
        raise UsageError(f"unknown case {case!r}; available: {', '.join(sorted(CASES))}")
    return CASES[case](cfg)


def run_sweep(cfg):
    axis = cfg["sweep.axis"]
    points = sweep_points(cfg)
    cfgs = [{**cfg, axis: x} for x in points]
    results = parallel_map(run_case, cfgs)
    return points, results


# -- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with dotted keys; flags override it")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    for key, (typ, default) in KEYS.items():
        if key == "case":
            continue
        common.add_argument(f"--{key}", dest=key, default=None, metavar=key.split(".")[-1].upper(),
                            help=f"default: {default}")
    common.add_argument("--c", dest="renorm_c", default=None, help="alias of --renorm_c")

    ap = argparse.ArgumentParser(prog="thermal-kms", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one named case")
    p.add_argument("--case", required=False, help=f"one of: {', '.join(sorted(CASES))}")
    p = sub.add_parser("sweep", parents=[common], help="run a case over a parameter axis; writes results.csv")
    p.add_argument("--case", required=False)
    sub.add_parser("graphs", parents=[common], help="enumerate connected multigraphs for --degrees")
    sub.add_parser("propagator", parents=[common], help="evaluate a two-point kernel (--kernel)")
    sub.add_parser("thermal-mass", parents=[common], help="thermal mass squared")
    for name, (_, default) in SHORTCUTS.items():
        p = sub.add_parser(name, parents=[common], help=f"{name} case-study quantities")
        p.add_argument("--quantity", default=default)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(ns).items() if k in KEYS and v is not None}
    try:
        file_cfg = read_config(ns.config) if ns.config else {}
        if ns.command in ("run", "sweep") and ns.case is not None:
            flags["case"] = ns.case
        elif ns.command in SHORTCUTS:
            prefix, _ = SHORTCUTS[ns.command]
            flags["case"] = prefix + ns.quantity
        elif ns.command in ("graphs", "propagator", "thermal-mass"):
            flags["case"] = ns.command
        cfg = resolve(file_cfg, flags)
        if not cfg["case"]:
            raise UsageError("no case given (use --case or a config file with 'case = ...')")
        cutoff_of(cfg)  # validate even for cases that do not use it
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)

        if cfg["case"] == "graphs":
            _dump({"case": "graphs", "config": _config_json(cfg), **case_graphs(cfg)}, out / "results.json")
            return 0

        if ns.command == "sweep":
            points, results = run_sweep(cfg)
            flat = [r for rs in results for r in rs]
            _dump({"case": cfg["case"], "config": _config_json(cfg), "sweep": {"axis": cfg["sweep.axis"],
                   "points": points}, "results": [r.to_json_obj() for r in flat]}, out / "results.json")
            with open(out / "results.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["beta", "mass", "p", "scale_n", "value_re", "value_im", "err"])
                for c, rs in zip([{**cfg, cfg["sweep.axis"]: x} for x in points], results):
                    for r in rs:
                        v = complex(r.value)
                        w.writerow([repr(c["beta"]), repr(c["mass"]), repr(c["p"]), repr(c["cutoff.scale_n"]),
                                    repr(v.real), repr(v.imag), repr(float(r.error_estimate))])
        else:
            flat = run_case(cfg)
            _dump({"case": cfg["case"], "config": _config_json(cfg),
                   "results": [r.to_json_obj() for r in flat]}, out / "results.json")
    except UsageError as exc:
        print(f"thermal-kms: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergentIntegralError as exc:
        print(f"thermal-kms: divergent integral: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (pg.DomainError, gr.GraphError, ExpansionError, AssemblyError, QuadratureError, ValueError) as exc:
        print(f"thermal-kms: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    exceeded = [r for r in flat if r.meta.get("budget_exceeded")]
    for r in flat:
        v = complex(r.value)
        print(f"{r.meta['case']}: {v.real:.15g}{v.imag:+.15g}j  err={r.error_estimate:.3g}")
    if exceeded:
        print(f"thermal-kms: {len(exceeded)} result(s) missed the quadrature tolerance", file=sys.stderr)
        return EXIT_BUDGET
    return 0


if __name__ == "__main__":
    sys.exit(main())
