"""Command line front end: tdho-scatter <subcommand> --config FILE [--out DIR]."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .coefficients import SigmaModel, extract_asymptotics, solve_zeta
from .config import RunConfig, git_blob_hash
from .diagnostics import fit_power_law
from .errors import ConfigError, TDHOError
from .propagator import PropagatorContext, apply_U
from .scattering import (FinalDatum, PipelineConfig, compose_scattering,
                         final_state_solve, forward_extract)
from .solver import EvolveConfig, evolve
from .spectral import Grid, load_field, save_field

SUBCOMMANDS = ("zeta", "propagate", "evolve", "finalstate", "extract", "scatter", "rates", "run")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("TDHO_THREADS", "1")))
    except ValueError:
        return 1


def _json_dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable))
    return Path(path)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _context(cfg: RunConfig, grid=None) -> PropagatorContext:
    z = cfg["zeta"]
    zeta = solve_zeta(cfg.sigma_model(), float(z["t_max"]), float(z["step"]))
    g = grid or cfg.grid()
    return PropagatorContext(zeta, extract_asymptotics(zeta, g.d), g)


def _datum(cfg: RunConfig) -> FinalDatum:
    ex = cfg["exponents"]
    u = cfg.make_field(cfg["datum"], cfg.profile_grid())
    thr = cfg["epsilon_threshold"]
    return FinalDatum(u, ex["alpha"], ex["beta"], ex["delta"], math.inf if thr is None else float(thr))


# ---------------------------------------------------------------- subcommands

def cmd_zeta(cfg, out, args):
    ctx = _context(cfg)
    arts = {"zeta_csv": ctx.zeta.to_csv(out / "zeta.csv")}
    arts["asymptotics"] = _json_dump(ctx.params.to_dict(), out / "asymptotics.json")
    return arts


def cmd_propagate(cfg, out, args):
    if getattr(args, "sigma", None):
        cfg.data["sigma"] = _parse_sigma(args.sigma)
    for key in ("d",):
        if getattr(args, key, None) is not None:
            cfg.data[key] = getattr(args, key)
    if getattr(args, "n", None) is not None:
        cfg.data["grid"]["n"] = args.n
    if getattr(args, "L", None) is not None:
        cfg.data["grid"]["L"] = args.L
    t0 = args.t0 if getattr(args, "t0", None) is not None else float(cfg["times"]["t0"])
    t1 = args.t1 if getattr(args, "t1", None) is not None else float(cfg["times"]["t1"])
    mode = getattr(args, "mode", None) or cfg["mode"]
    grid = cfg.grid()
    ctx = _context(cfg, grid)
    if getattr(args, "input", None):
        f = load_field(args.input)
    else:
        f = cfg.make_field(cfg["initial"], grid, t0)
    res = apply_U(ctx, f.with_values(f.values, time=t0), t0, t1, mode=mode, dt=float(cfg["evolve"]["dt"]))
    target = Path(args.output) if getattr(args, "output", None) else out / "propagated.bin"
    save_field(res, target)
    return {"field": target}


def _evolve_cfg(cfg, args):
    e = dict(cfg["evolve"])
    for k in ("dt", "scheme", "potential_mode", "dt_growth", "beta"):
        v = getattr(args, k, None)
        if v is not None:
            e[k] = v
    eta = args.eta if getattr(args, "eta", None) is not None else cfg["eta"]
    t0 = args.t0 if getattr(args, "t0", None) is not None else float(cfg["times"]["t0"])
    t1 = args.t1 if getattr(args, "t1", None) is not None else float(cfg["times"]["t1"])
    return EvolveConfig(eta=float(eta), dt=float(e["dt"]), t_begin=t0, t_end=t1, scheme=e["scheme"],
                        potential_mode=e["potential_mode"], dt_growth=float(e["dt_growth"]),
                        beta=None if e["beta"] is None else float(e["beta"]))


def cmd_evolve(cfg, out, args):
    ec = _evolve_cfg(cfg, args)
    grid = cfg.grid()
    ctx = _context(cfg, grid)
    u0 = cfg.make_field(cfg["initial"], grid, ec.t_begin)
    n = int(cfg["checkpoints"]["per_decade"])
    samples = np.linspace(ec.t_begin, ec.t_end, max(2, n) + 1)[1:-1]
    tr = evolve(ctx, ec, u0, sample_times=samples)
    final = tr.final
    return {"observables": tr.to_csv(out / "observables.csv"), "field": save_field(final, out / "final.bin")}


def cmd_finalstate(cfg, out, args):
    ctx = _context(cfg)
    dat = _datum(cfg)
    dat.validate(ctx.params.p_c)
    t = cfg["times"]
    res = final_state_solve(ctx, dat, float(t["T_start"]), float(cfg["eta"]), dt=float(cfg["lens"]["dt"]),
                            dt_growth=float(cfg["lens"]["dt_growth"]),
                            per_decade=int(cfg["checkpoints"]["per_decade"]), phys_grid=cfg.grid())
    arts = {"curve": res.curve_to_csv(out / "final_state.csv")}
    arts["summary"] = _json_dump({"mu": res.mu, "fit": res.fit.to_dict() if res.fit else None,
                                  "meta": res.meta}, out / "final_state.json")
    arts["u_stop"] = save_field(res.u_stop, out / "u_minus_r0.bin")
    return arts


def cmd_extract(cfg, out, args):
    ctx = _context(cfg)
    ex = cfg["exponents"]
    r0 = ctx.params.r0
    init = cfg["initial"]
    if "file" in init:
        u = load_field(cfg.base_dir / init["file"])
    else:
        u0 = cfg.make_field(init, cfg.grid(), 0.0)
        u = apply_U(ctx, u0, 0.0, r0)
    res = forward_extract(ctx, u, float(cfg["times"]["T_end"]), float(cfg["eta"]), float(ex["delta"]),
                          cfg["chi"], lens_grid=cfg.profile_grid().dual(), dt=float(cfg["lens"]["dt"]),
                          dt_growth=float(cfg["lens"]["dt_growth"]),
                          per_decade=int(cfg["checkpoints"]["per_decade"]), beta=float(ex["beta"]))
    arts = {"curve": res.curve_to_csv(out / "forward.csv"), "result": res.to_json(out / "scatter_result.json")}
    arts["u_plus"] = save_field(res.u_plus, out / "u_plus.bin")
    return arts


def cmd_scatter(cfg, out, args):
    ctx = _context(cfg)
    dat = _datum(cfg)
    t = cfg["times"]
    pc = PipelineConfig(eta=float(cfg["eta"]), T_start=float(t["T_start"]), T_end=float(t["T_end"]),
                        phys_grid=cfg.grid(), bridge_dt=float(cfg["bridge"]["dt"]), lens_dt=float(cfg["lens"]["dt"]),
                        dt_growth=float(cfg["lens"]["dt_growth"]), per_decade=int(cfg["checkpoints"]["per_decade"]),
                        chi=cfg["chi"])
    res = compose_scattering(ctx, dat, pc)
    arts = {
        "final_state_curve": res.final_state.curve_to_csv(out / "final_state.csv"),
        "forward_curve": res.forward.curve_to_csv(out / "forward.csv"),
        "result": res.forward.to_json(out / "scatter_result.json"),
        "norms": _json_dump(res.norms, out / "stage_norms.json"),
    }
    for name, f in (("u0", res.u0), ("u_r0", res.u_r0), ("u_plus", res.u_plus)):
        arts[name] = save_field(f, out / f"{name}.bin")
    return arts


def cmd_rates(cfg, out, args):
    r = dict(cfg["rates"])
    if getattr(args, "csv", None):
        r["csv"] = args.csv
    if getattr(args, "column", None):
        r["column"] = args.column
    if "csv" not in r:
        raise ConfigError("rates needs a csv path")
    col = r.get("column", "e_weighted")
    path = Path(r["csv"])
    if not path.is_absolute():
        path = cfg.base_dir / path
    ts, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = float(row[col])
            if v > 0 and math.isfinite(v):
                ts.append(float(row["t"]))
                vs.append(v)
    fit = fit_power_law(ts, vs, r.get("window"))
    return {"fit": _json_dump(fit.to_dict() | {"column": col, "source": str(path)}, out / "rates.json")}


COMMANDS = {"zeta": cmd_zeta, "propagate": cmd_propagate, "evolve": cmd_evolve, "finalstate": cmd_finalstate,
            "extract": cmd_extract, "scatter": cmd_scatter, "rates": cmd_rates}


def _parse_sigma(s: str) -> dict:
    if s == "zero":
        return {"kind": "zero"}
    if s.startswith("piecewise:"):
        a, b, c = (float(v) for v in s.split(":", 1)[1].split(","))
        return {"kind": "piecewise", "sigma0": a, "sigma1": b, "r1": c}
    if s.endswith(".csv"):
        return {"kind": "table", "csv": str(Path(s).resolve())}
    raise ConfigError(f"cannot parse --sigma {s!r}; use zero, piecewise:s0,s1,r1 or a CSV path")


def _manifest(cfg: RunConfig, out: Path, entries: list) -> Path:
    items = []
    for e in entries:
        arts = {k: str(Path(v).relative_to(out)) if Path(v).is_relative_to(out) else str(v)
                for k, v in e["artifacts"].items()}
        hashes = {k: git_blob_hash(Path(v).read_bytes()) for k, v in e["artifacts"].items() if Path(v).exists()}
        items.append({"kind": e["kind"], "dir": e["dir"], "artifacts": arts, "hashes": hashes})
    m = {"input_hash": cfg.hash, "config": str(cfg.path) if cfg.path else None, "seed": cfg["seed"],
         "experiments": items}
    return _json_dump(m, out / "manifest.json")


def _run_one(args_tuple):
    data, base_dir, kind, index, out = args_tuple
    cfg = RunConfig(data, base_dir=Path(base_dir))
    sub = Path(out) / f"{index:03d}_{kind}"
    sub.mkdir(parents=True, exist_ok=True)
    np.random.seed(int(cfg["seed"]) + index)
    arts = COMMANDS[kind](cfg, sub, argparse.Namespace())
    return {"kind": kind, "dir": sub.name, "artifacts": {k: str(v) for k, v in arts.items()}}


def cmd_run(cfg: RunConfig, out: Path, args) -> Path:
    jobs = []
    for i, e in enumerate(cfg["experiments"]):
        over = {k: v for k, v in e.items() if k != "kind"}
        child = cfg.child(over)
        jobs.append((child.data, str(child.base_dir), e["kind"], i, str(out)))
    nt = threads()
    if nt > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(nt, len(jobs))) as ex:
            entries = list(ex.map(_run_one, jobs))
    else:
        entries = [_run_one(j) for j in jobs]
    return _manifest(cfg, out, entries)


# ---------------------------------------------------------------- entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="tdho-scatter", description=__doc__)
    sp = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sp.add_parser(name)
        p.add_argument("--config", required=name not in ("propagate", "rates"))
        p.add_argument("--out", default=None)
        if name == "propagate":
            p.add_argument("--sigma")
            p.add_argument("--d", type=int)
            p.add_argument("--n", type=int)
            p.add_argument("--L", type=float)
            p.add_argument("--t0", type=float)
            p.add_argument("--t1", type=float)
            p.add_argument("--input")
            p.add_argument("--output")
            p.add_argument("--mode", choices=("factorized", "splitstep", "auto"))
        if name == "evolve":
            p.add_argument("--eta", type=float)
            p.add_argument("--dt", type=float)
            p.add_argument("--t0", type=float)
            p.add_argument("--t1", type=float)
            p.add_argument("--scheme", choices=("strang", "lie"))
            p.add_argument("--potential-mode", dest="potential_mode", choices=("pointwise", "exact"))
            p.add_argument("--dt-growth", dest="dt_growth", type=float)
            p.add_argument("--beta", type=float)
        if name == "rates":
            p.add_argument("--csv")
            p.add_argument("--column")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
        out = Path(args.out if args.out else cfg["out"])
        if not out.is_absolute() and args.out is None:
            out = cfg.base_dir / out
        out.mkdir(parents=True, exist_ok=True)
        with sfft.set_workers(threads()):
            if args.command == "run":
                path = cmd_run(cfg, out, args)
            else:
                arts = COMMANDS[args.command](cfg, out, args)
                path = _manifest(cfg, out, [{"kind": args.command, "dir": ".",
                                             "artifacts": {k: str(v) for k, v in arts.items()}}])
    except ConfigError as e:
        print(f"tdho-scatter: config error: {e}", file=sys.stderr)
        return 2
    except TDHOError as e:
        print(f"tdho-scatter: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
