"""Command-line front end: section constants, minimisations, eps-sweeps and recovery checks.

Exit codes: 0 ok, 2 invalid input, 3 solver failure (outputs are still written).
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .cross_section import NAMED_PROFILES, ProfileError, make_profile, orthogonality_report, section_constants
from .fe1d import Mesh1D
from .limit_beta2 import AdmissibilityError, BoundaryData, minimize_beta2
from .limit_sub2 import minimize_sub2
from .optim import SolverOptions
from .vk2d import Grid2D, ScaledParams, energy_eps, membrane_components, minimize_eps

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3

PROFILES = {k: list(v) for k, v in NAMED_PROFILES.items()}
BC_KEYS = ("Lambda1", "Lambda2", "Lambda3", "Phi1", "Phi2", "Phi3")

log = logging.getLogger("vkribbon")


class InputError(ValueError):
    pass


# --- config ----------------------------------------------------------------------------

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "profile": {"coeffs": PROFILES["parabola"]},
    "bc": {k: 0.0 for k in BC_KEYS},
    "model": "beta2",
    "beta": 2.0,
    "eps": [0.1],
    "ell": 1.0,
    "n_elems": 256,
    "grid": None,
    "subspace": None,
    "continuation": False,
    "solver": {"tol": 1e-9, "max_iter": 200, "multistart": 1, "seed": 0},
    "workers": 1,
    "n_states": 20,
    "out": None,
}


def load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    ver = cfg.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise InputError(f"unsupported config schema_version {ver!r} (expected {SCHEMA_VERSION})")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def merged_config(args):
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        file_cfg = load_config(args.config)
        for k, v in file_cfg.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    if getattr(args, "profile", None):
        cfg["profile"] = {"coeffs": parse_profile_arg(args.profile)}
    for k in BC_KEYS:
        v = getattr(args, k.lower(), None)
        if v is not None:
            cfg["bc"][k] = v
    for k in ("model", "beta", "ell", "n_elems", "subspace", "workers", "n_states", "out"):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if getattr(args, "eps", None):
        cfg["eps"] = args.eps
    if getattr(args, "grid", None):
        cfg["grid"] = args.grid
    if getattr(args, "continuation", False):
        cfg["continuation"] = True
    for k in ("tol", "max_iter", "multistart", "seed"):
        v = getattr(args, k, None)
        if v is not None:
            cfg["solver"][k] = v
    return cfg


def parse_profile_arg(text):
    if text in PROFILES:
        return PROFILES[text]
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"profile must be a name {sorted(PROFILES)} or comma-separated coefficients")


def parse_grid(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise InputError(f"grid must look like n1xn2, got {text!r}")


def build(cfg):
    """Validate everything up front; returns the typed pieces."""
    prof = make_profile(cfg["profile"]["coeffs"])
    try:
        bc = BoundaryData(**{k: float(cfg["bc"].get(k, 0.0)) for k in BC_KEYS})
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc))
    s = cfg["solver"]
    opts = SolverOptions(tol=float(s["tol"]), max_iter=int(s["max_iter"]),
                         multistart=int(s["multistart"]), seed=int(s["seed"]))
    if not opts.tol > 0 or opts.max_iter < 1 or opts.multistart < 1:
        raise InputError("solver options need tol > 0, max_iter >= 1, multistart >= 1")
    eps = [float(e) for e in (cfg["eps"] if isinstance(cfg["eps"], list) else [cfg["eps"]])]
    if any(not (e > 0 and math.isfinite(e)) for e in eps):
        raise InputError("eps values must be positive")
    beta = float(cfg["beta"])
    if not 0 < beta <= 2:
        raise InputError("beta must lie in (0, 2]")
    ell = float(cfg["ell"])
    if not ell > 0:
        raise InputError("ell must be positive")
    grids = None
    if cfg["grid"]:
        gl = cfg["grid"] if isinstance(cfg["grid"], list) else [cfg["grid"]]
        grids = [Grid2D(*parse_grid(g), ell) if isinstance(g, str) else Grid2D(int(g[0]), int(g[1]), ell) for g in gl]
    return prof, bc, opts, eps, beta, ell, grids


# --- output ----------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj):
    """JSON with every float at 17 significant digits (repr round-trips exactly)."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")


def _out_dir(cfg):
    out = cfg.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
    return out


# --- commands --------------------------------------------------------------------------

def cmd_constants(args, cfg):
    prof, *_ = build(cfg)
    k = section_constants(prof, float(cfg["ell"]))
    data = {"profile": prof.to_json(), "constants": k.to_json(), "orthogonality_max_offdiag": orthogonality_report(prof)}
    width = max(len(n) for n in data["constants"])
    print(f"profile coefficients: {prof.to_json()['coeffs']}")
    for name, v in data["constants"].items():
        print(f"  {name:<{width}}  {v:.17g}")
    print(f"  {'orthogonality':<{width}}  {data['orthogonality_max_offdiag']:.3e}")
    out = _out_dir(cfg)
    if out:
        write_json(os.path.join(out, "constants.json"), data)
    return EXIT_OK


def cmd_minimize(args, cfg):
    prof, bc, opts, eps, beta, ell, grids = build(cfg)
    model = cfg["model"]
    out = _out_dir(cfg)
    if model == "beta2":
        k = section_constants(prof, ell)
        state, rep = minimize_beta2(bc, k, Mesh1D(ell, int(cfg["n_elems"])), opts, subspace=cfg["subspace"])
        converged = rep.solver["converged"]
    elif model == "sub2":
        state, rep = minimize_sub2(bc, Mesh1D(ell, int(cfg["n_elems"])), opts)
        rep.extra = {**rep.extra, "beta_label": beta}
        converged = rep.solver["converged"]
    elif model == "vk2d":
        if len(eps) != 1:
            raise InputError("vk2d minimisation takes exactly one eps")
        p = ScaledParams(eps[0], beta, ell)
        grid = grids[0] if grids else Grid2D(max(8, int(math.ceil(16 / math.sqrt(eps[0])))), 8, ell)
        state, rep = minimize_eps(bc, p, prof, grid, opts, continuation=bool(cfg["continuation"]))
        converged = rep.solver["converged"]
        if out:
            state.to_csv(os.path.join(out, "field.csv"), prof)
    else:
        raise InputError(f"unknown model {model!r}")
    print(f"model {model}: energy {rep.total:.17g}")
    for name, v in rep.terms.items():
        print(f"  {name:<18} {v:.17g}")
    print(f"  solver: {rep.solver.get('message', '')}")
    if out:
        write_json(os.path.join(out, "state.json"), state.to_json())
        report = rep.to_json()
        report["config"] = cfg
        report["flagged"] = not converged
        write_json(os.path.join(out, "report.json"), report)
    if not converged:
        print("solver did not converge; outputs flagged", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_sweep(args, cfg):
    from .gamma_lab import gamma_sweep

    prof, bc, opts, eps, beta, ell, grids = build(cfg)
    if grids is not None and len(grids) != len(eps):
        raise InputError("give one grid per eps value")
    rep = gamma_sweep(bc, beta, prof, eps, grids, opts, ell=ell, n1d=int(cfg["n_elems"]), workers=int(cfg["workers"]))
    print(f"{'eps':>10} {'grid':>8} {'energy_2d':>22} {'energy_limit':>22} {'gap':>12} {'ratio':>8}  error")
    for r in rep.rows:
        print(f"{r['eps']:>10.4g} {r['grid']:>8} {r['energy_2d']:>22.15g} {r['energy_limit']:>22.15g} "
              f"{r['gap']:>12.4e} {r['gap_ratio_vs_previous']:>8.4f}  {r['error']}")
    out = _out_dir(cfg)
    if out:
        rep.to_csv(os.path.join(out, "sweep.csv"))
        write_json(os.path.join(out, "sweep.json"), {**rep.to_json(), "config": cfg})
    return EXIT_OK if rep.ok else EXIT_SOLVER


def cmd_recovery_check(args, cfg):
    from .gamma_lab import (bending_gap_beta2, random_polynomial_state, recovery_beta2,
                            recovery_sub2)
    from .limit_beta2 import energy_beta2

    prof, bc, opts, eps, beta, ell, grids = build(cfg)
    rng = np.random.default_rng(int(cfg["solver"]["seed"]))
    rows = []
    ok = True
    if beta == 2:
        k = section_constants(prof, ell)
        mesh = Mesh1D(ell, 4)
        for i in range(int(cfg["n_states"])):
            s = random_polynomial_state(mesh, rng)
            e1 = energy_beta2(s, k).total
            for e in eps:
                p = ScaledParams(e, 2.0, ell)
                g = grids[0] if grids else Grid2D(8, 2, ell)
                an = recovery_beta2(s, p, prof, g, analytic=True)
                rep = energy_eps(an, p, prof, g, nq=6)
                mc = membrane_components(an, p, prof, g, nq=6)
                row = {"state": i, "eps": e, "energy_2d": rep.total, "energy_limit": e1,
                       "gap": rep.total - e1, "predicted_gap": bending_gap_beta2(s, p),
                       "max_abs_S12": float(np.max(np.abs(mc["S12"]))),
                       "max_abs_S22": float(np.max(np.abs(mc["S22"])))}
                row["gap_error"] = abs(row["gap"] - row["predicted_gap"])
                ok &= row["gap_error"] < 1e-10 and row["max_abs_S12"] < 1e-12 and row["max_abs_S22"] < 1e-12
                rows.append(row)
        worst = {k: max(r[k] for r in rows) for k in ("gap_error", "max_abs_S12", "max_abs_S22")}
    else:
        state, lrep = minimize_sub2(bc, Mesh1D(ell, int(cfg["n_elems"])), opts)
        for e in eps:
            p = ScaledParams(e, beta, ell)
            rec = recovery_sub2(state, bc, prof, p, n=1)
            teeth = rec.zeta.n if rec.zeta is not None else 1
            g = Grid2D(max(64, 32 * teeth), 2, ell)
            rep = energy_eps(rec.field, p, prof, g, nq=8)
            rows.append({"eps": e, "energy_2d": rep.total, "energy_limit": lrep.total,
                         "bending": rep.terms["bending"], "membrane": rep.terms["membrane"],
                         "wave_count": teeth, "p2": rec.p2})
        worst = {"energy_2d": [r["energy_2d"] for r in rows]}
    for k, v in worst.items():
        print(f"{k}: {v}")
    out = _out_dir(cfg)
    if out:
        write_json(os.path.join(out, "recovery.json"), {"rows": rows, "worst": worst, "config": cfg})
    return EXIT_OK if ok else EXIT_SOLVER


# --- argument parsing ------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", help="JSON config (schema_version %d); flags override it" % SCHEMA_VERSION)
    sp.add_argument("--profile", help="parabola, quartic, or comma-separated coefficients by power")
    sp.add_argument("--ell", type=float, help="ribbon length")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_model(sp):
    for k in BC_KEYS:
        sp.add_argument(f"--{k.lower()}", type=float, dest=k.lower(), help=f"boundary datum {k}")
    sp.add_argument("--beta", type=float, help="membrane exponent in (0, 2]")
    sp.add_argument("--eps", type=float, nargs="+", help="thickness parameter(s)")
    sp.add_argument("--grid", nargs="+", help="2D grid(s) as n1xn2")
    sp.add_argument("--n-elems", type=int, dest="n_elems", help="1D mesh size")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int, dest="max_iter")
    sp.add_argument("--multistart", type=int)
    sp.add_argument("--seed", type=int)


def make_parser():
    ap = argparse.ArgumentParser(prog="vkribbon", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("constants", help="section constants and orthogonality check")
    _add_common(sp)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("minimize", help="minimise a 1D limit or the 2D energy")
    _add_common(sp)
    _add_model(sp)
    sp.add_argument("--model", choices=("beta2", "sub2", "vk2d"))
    sp.add_argument("--subspace", choices=("torsion", "flexure"))
    sp.add_argument("--continuation", action="store_true", help="eps-continuation start for vk2d")
    sp.set_defaults(func=cmd_minimize)

    sp = sub.add_parser("sweep", help="2D minima along an eps list against the limit minimum")
    _add_common(sp)
    _add_model(sp)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("recovery-check", help="energies of recovery fields")
    _add_common(sp)
    _add_model(sp)
    sp.add_argument("--n-states", type=int, dest="n_states")
    sp.set_defaults(func=cmd_recovery_check)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merged_config(args)
        return args.func(args, cfg)
    except (InputError, ProfileError, AdmissibilityError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
