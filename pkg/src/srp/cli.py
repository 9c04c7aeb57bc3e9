"""Command line entry point: ``srp verify|tails|regen|constants|alpha0|sample|census``.

Exit codes: 0 success, 1 a check failed, 2 usage or invalid parameters,
3 capacity exceeded.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import jsonschema

from srp.decay import constants_bundle
from srp.errors import CapacityError, InfeasibleParameters
from srp.runner import (alpha0_report, resolve_config, run_census, run_regen, run_sample,
                        run_tails, square_lattice_census, write_text)
from srp.suites import SUITES

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3


def _geometry_overrides(args) -> dict:
    geo = {}
    if getattr(args, "rows", None) is not None or getattr(args, "cols", None) is not None:
        geo = {"kind": "grid", "rows": args.rows or args.cols, "cols": args.cols or args.rows}
    if getattr(args, "n", None) is not None:
        geo = {"kind": "cylinder", "n": args.n, "d": args.d}
        if args.width is not None:
            geo["width"] = args.width
    if getattr(args, "graph", None):
        geo = {"kind": "graph", "file": args.graph}
    return {"geometry": geo} if geo else {}


def _overrides(args) -> dict:
    o = _geometry_overrides(args)
    for name in ("alpha", "log_mu", "delta", "seed", "model"):
        v = getattr(args, name, None)
        if v is not None:
            o[name] = v
    if getattr(args, "alpha_grid", None):
        o["alpha_grid"] = args.alpha_grid
    sampler = {k: getattr(args, k) for k in ("samples", "sweeps_per_sample", "burn_in_sweeps", "workers")
               if getattr(args, k, None) is not None}
    if sampler:
        o["sampler"] = sampler
    analysis = {}
    for k in ("ell_max", "vertex", "census_n_max", "origin", "n_max"):
        v = getattr(args, k, None)
        if v is not None:
            analysis[k] = v
    if getattr(args, "M", None):
        analysis["M"] = args.M
    if analysis:
        o["analysis"] = analysis
    out = {k: getattr(args, k) for k in ("csv", "detail", "junit") if getattr(args, k, None)}
    if out:
        o["output"] = out
    return o


def _add_common(p, geometry=True, sampler=True):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    if geometry:
        p.add_argument("--rows", type=int)
        p.add_argument("--cols", type=int)
        p.add_argument("--n", type=int, help="cylinder length")
        p.add_argument("--d", type=int, default=2)
        p.add_argument("--width", type=int)
        p.add_argument("--graph", help="graph JSON file")
    if sampler:
        p.add_argument("--samples", type=int)
        p.add_argument("--sweeps-per-sample", dest="sweeps_per_sample", type=int)
        p.add_argument("--burn-in-sweeps", dest="burn_in_sweeps", type=int)
        p.add_argument("--workers", type=int)
    p.add_argument("--csv", help="output CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srp", description="Spatial random permutation experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--junit", help="write a junit XML report here")
    v.add_argument("--json", dest="json_out", help="write the JSON report here")

    t = sub.add_parser("tails", help="cycle-length tail with the decay overlay")
    _add_common(t)
    t.add_argument("--alpha-grid", dest="alpha_grid", type=float, nargs="+")
    t.add_argument("--log-mu", dest="log_mu", type=float)
    t.add_argument("--delta", type=float)
    t.add_argument("--ell-max", dest="ell_max", type=int)
    t.add_argument("--vertex", type=int)
    t.add_argument("--census-n-max", dest="census_n_max", type=int)

    r = sub.add_parser("regen", help="regeneration-chain fluctuation statistics")
    _add_common(r)
    r.add_argument("--M", type=float, nargs="+")
    r.add_argument("--detail", help="per-sample CSV path")

    c = sub.add_parser("constants", help="print the decay constants")
    c.add_argument("--config")
    c.add_argument("--alpha", type=float)
    c.add_argument("--log-mu", dest="log_mu", type=float)
    c.add_argument("--delta", type=float)
    c.add_argument("--census-n-max", dest="census_n_max", type=int)

    a = sub.add_parser("alpha0", help="solve for alpha0 given log mu")
    a.add_argument("--log-mu", dest="log_mu", type=float, required=True)

    s = sub.add_parser("sample", help="raw Metropolis samples")
    _add_common(s)
    s.add_argument("--model", choices=["closed", "open"])

    cs = sub.add_parser("census", help="rooted walk and polygon counts")
    _add_common(cs, sampler=False)
    cs.add_argument("--origin", type=int)
    cs.add_argument("--n-max", dest="n_max", type=int)
    return ap


def _emit(path, text, out):
    if path:
        write_text(path, text)
    else:
        out.write(text)


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return _dispatch(args, out)
    except CapacityError as e:
        print(f"capacity exceeded: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except jsonschema.ValidationError as e:
        where = "/".join(map(str, e.absolute_path)) or "config"
        print(f"invalid config at {where}: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleParameters, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args, out) -> int:
    cmd = args.command
    if cmd == "verify":
        report = SUITES[args.suite]()
        print(report.summary(), file=out)
        for f in report.failures[:20]:
            print("FAIL " + f.to_json(), file=out)
        if args.junit:
            write_text(args.junit, report.to_junit())
        if args.json_out:
            write_text(args.json_out, report.to_json())
        return EXIT_OK if report.passed else EXIT_FAIL
    if cmd == "alpha0":
        if not math.isfinite(args.log_mu):
            raise ValueError("log_mu must be finite")
        print(json.dumps(alpha0_report(args.log_mu), sort_keys=True), file=out)
        return EXIT_OK
    over = _overrides(args)
    over.setdefault("analysis", {})["kind"] = cmd
    cfg = resolve_config(args.config, over)
    if cmd == "constants":
        n_max = args.census_n_max if args.census_n_max is not None else cfg["analysis"]["census_n_max"]
        census = square_lattice_census(n_max) if n_max else None
        b = constants_bundle(cfg["alpha"], cfg["log_mu"], cfg["delta"], census)
        print(json.dumps(b.as_dict(), sort_keys=True), file=out)
        return EXIT_OK
    if cmd == "tails":
        text, results = run_tails(cfg)
        for r in results:
            if r["warning"]:
                print(f"warning: {r['warning']}", file=sys.stderr)
        _emit(cfg["output"]["csv"], text, out)
        return EXIT_OK
    if cmd == "regen":
        text, detail, _ = run_regen(cfg)
        _emit(cfg["output"]["csv"], text, out)
        if cfg["output"]["detail"]:
            write_text(cfg["output"]["detail"], detail)
        return EXIT_OK
    if cmd == "sample":
        _emit(cfg["output"]["csv"], run_sample(cfg), out)
        return EXIT_OK
    if cmd == "census":
        _emit(cfg["output"]["csv"], run_census(cfg), out)
        return EXIT_OK
    raise ValueError(f"unknown command {cmd}")


if __name__ == "__main__":
    sys.exit(main())
