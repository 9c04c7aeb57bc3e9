"""Configured experiment runs and their CSV outputs.

Every CSV starts with one ``#``-prefixed JSON line holding the resolved
configuration, the code hash and a timestamp; everything below it is a pure
function of the configuration and seed.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from srp.decay import constants_bundle, solve_alpha0
from srp.errors import CapacityError, InfeasibleParameters
from srp.exact import census_max_over, cycle_tail, saw_census
from srp.lattice import Graph, build_cylinder, grid_graph
from srp.regeneration import fluctuation_stats, sample_cylinder_walks, wilson_interval
from srp.samplers import ClosedChain, OpenChain, RngStream

SQUARE_LOG_MU = math.log(2.638)

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {"enum": ["closed", "open"]},
        "geometry": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["grid", "cylinder", "graph"]},
                "rows": {"type": "integer", "minimum": 1},
                "cols": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 2},
                "width": {"type": ["integer", "null"], "minimum": 1},
                "file": {"type": "string"},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "alpha": {"type": "number"},
        "alpha_grid": {"type": "array", "items": {"type": "number"}},
        "log_mu": {"type": "number"},
        "delta": {"type": ["number", "null"]},
        "sampler": {
            "type": "object",
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "sweeps_per_sample": {"type": "integer", "minimum": 1},
                "burn_in_sweeps": {"type": "integer", "minimum": 0},
                "exact_cap": {"type": "integer", "minimum": 0},
                "symmetrize": {"type": "boolean"},
                "workers": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["tails", "regen", "constants", "sample", "census", "markov-suite", "gw", "boundary-decay"]},
                "ell_max": {"type": "integer", "minimum": 1},
                "vertex": {"type": ["integer", "null"]},
                "census_n_max": {"type": "integer", "minimum": 0},
                "M": {"type": "array", "items": {"type": "number"}},
                "origin": {"type": ["integer", "null"]},
                "n_max": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "properties": {"csv": {"type": ["string", "null"]}, "detail": {"type": ["string", "null"]},
                           "junit": {"type": ["string", "null"]}},
            "additionalProperties": False,
        },
    },
}

DEFAULTS = {
    "model": "closed",
    "geometry": {"kind": "grid", "rows": 12, "cols": 12},
    "alpha": 1.5,
    "log_mu": SQUARE_LOG_MU,
    "delta": None,
    "sampler": {"samples": 10_000, "sweeps_per_sample": 10, "burn_in_sweeps": 200,
                "exact_cap": 200_000, "symmetrize": True, "workers": 1},
    "analysis": {"kind": "tails", "ell_max": 20, "vertex": None, "census_n_max": 10,
                 "M": [0.25, 0.5, 1.0, 2.0], "origin": None, "n_max": 10},
    "seed": 0,
    "output": {"csv": None, "detail": None, "junit": None},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k == "geometry" and v.get("kind", out.get(k, {}).get("kind")) != out.get(k, {}).get("kind"):
            out[k] = copy.deepcopy(v)
        elif isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(path: str | None = None, overrides: dict | None = None, defaults: dict | None = None) -> dict:
    """Defaults, then the JSON file, then flag overrides; validated against the schema."""
    cfg = copy.deepcopy(DEFAULTS if defaults is None else defaults)
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if isinstance(user, dict) and isinstance(user.get("config"), dict):
            user = user["config"]  # a committed regression fixture
        jsonschema.validate(user, CONFIG_SCHEMA)
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def code_hash() -> str:
    """SHA-256 over the package sources, in file-name order."""
    h = hashlib.sha256()
    pkg = resources.files("srp")
    for entry in sorted(pkg.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".py"):
            h.update(entry.name.encode())
            h.update(entry.read_bytes())
    return h.hexdigest()[:16]


def csv_text(header: dict, columns: list[str], rows: list) -> str:
    """CSV with a ``#`` JSON metadata line; floats use ``repr`` so output is exact."""
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True, default=str) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def read_csv(text: str) -> tuple[dict, list[dict]]:
    lines = text.splitlines()
    header = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    body = lines[1:] if header else lines
    return header, list(csv.DictReader(body))


def make_header(cfg: dict, **extra) -> dict:
    return dict({"config": cfg, "code_hash": code_hash(), "created": time.strftime("%Y-%m-%dT%H:%M:%S")}, **extra)


def geometry(cfg: dict) -> tuple[Graph, object]:
    """The graph of a configuration, and the cylinder lattice when there is one."""
    geo = cfg["geometry"]
    kind = geo["kind"]
    if kind == "grid":
        return grid_graph(geo["rows"], geo["cols"]), None
    if kind == "cylinder":
        lat = build_cylinder(geo["n"], geo.get("d", 2), geo.get("width"))
        return lat.graph, lat
    with open(geo["file"]) as fh:
        return Graph.from_json(fh.read()), None


def stream_id(cfg: dict, alpha: float, chain: int) -> int:
    """Deterministic stream index from the configuration, ``alpha`` and the chain index."""
    science = {k: cfg[k] for k in ("model", "geometry", "sampler", "seed")}
    science["sampler"] = {k: v for k, v in science["sampler"].items() if k != "workers"}
    key = json.dumps({"cfg": science, "alpha": alpha, "chain": chain}, sort_keys=True, default=str)
    return int(hashlib.sha256(key.encode()).hexdigest()[:8], 16)


def _centre(g: Graph) -> int:
    coords = g.coords
    if coords is None:
        return 0
    mid = np.array(coords, dtype=float).mean(axis=0)
    return int(np.argmin(((np.array(coords, dtype=float) - mid) ** 2).sum(axis=1)))


# ---------------------------------------------------------------------------
# cycle-length tails

def square_lattice_census(n_max: int):
    """Rooted polygon counts of the square lattice up to ``n_max``, from a large enough box."""
    side = 2 * n_max + 3
    g = grid_graph(side, side)
    return saw_census(g, (side // 2) * side + side // 2, n_max)


def _fitted_rate(rows) -> float | None:
    pts = [(ell, math.log(p)) for ell, p in rows if p > 0 and ell > 0]
    if len(pts) < 2:
        return None
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def tails_one(cfg: dict, alpha: float, g: Graph) -> dict:
    """Tail table ``P(||gamma_z|| > ell)`` with CI and overlay for one ``alpha``."""
    an, sm = cfg["analysis"], cfg["sampler"]
    z = an["vertex"] if an["vertex"] is not None else _centre(g)
    ell_max = an["ell_max"]
    warning = None
    try:
        census = square_lattice_census(an["census_n_max"]) if an["census_n_max"] else None
        bundle = constants_bundle(alpha, cfg["log_mu"], cfg["delta"], census)
    except (InfeasibleParameters, ValueError) as e:
        bundle, warning = None, f"overlay omitted: {e}"
    exact = None
    try:
        exact = cycle_tail(g, z, alpha, cap=sm["exact_cap"])
    except CapacityError:
        pass
    rows = []
    if exact is not None:
        for ell in range(ell_max + 1):
            p = exact.tail(ell)
            rows.append((ell, p, p, p))
        method, samples = "exact", None
    else:
        rs = RngStream(cfg["seed"], stream_id(cfg, alpha, 0))
        chain = ClosedChain(g, alpha, rs.generator())
        res = chain.run(sm["samples"], sm["sweeps_per_sample"], sm["burn_in_sweeps"], z=z, codes=False)
        lens = res.zlen
        n = len(lens)
        for ell in range(ell_max + 1):
            k = int((lens > ell).sum())
            lo, hi = wilson_interval(k, n)
            rows.append((ell, k / n, lo, hi))
        method, samples = "mcmc", n
    out = []
    below = True
    for ell, p, lo, hi in rows:
        ov = bundle.overlay(ell) if bundle else None
        ok = None if ov is None else hi <= ov
        if ok is False:
            below = False
        out.append([ell, p, lo, hi, ov if ov is not None else "", "" if ok is None else int(ok)])
    return {"alpha": alpha, "vertex": z, "method": method, "samples": samples, "rows": out,
            "constants": bundle.as_dict() if bundle else None, "below_overlay": below if bundle else None,
            "fitted_rate": _fitted_rate([(r[0], r[1]) for r in rows]), "warning": warning}


def run_tails(cfg: dict) -> tuple[str, list[dict]]:
    g, _ = geometry(cfg)
    alphas = cfg.get("alpha_grid") or [cfg["alpha"]]
    with ThreadPoolExecutor(max_workers=cfg["sampler"]["workers"]) as ex:
        results = list(ex.map(lambda a: tails_one(cfg, a, g), alphas))
    rows = [[r["alpha"]] + row for r in results for row in r["rows"]]
    meta = [{k: v for k, v in r.items() if k != "rows"} for r in results]
    text = csv_text(make_header(cfg, runs=meta),
                    ["alpha", "ell", "tail", "ci_low", "ci_high", "overlay", "below_overlay"], rows)
    return text, results


# ---------------------------------------------------------------------------
# regeneration statistics

def run_regen(cfg: dict) -> tuple[str, str, dict]:
    """Regeneration-chain fluctuation summary (long format) and per-sample detail."""
    g, lat = geometry(cfg)
    if lat is None:
        raise ValueError("regen needs a cylinder geometry")
    sm, an = cfg["sampler"], cfg["analysis"]
    rs = RngStream(cfg["seed"], stream_id(cfg, cfg["alpha"], 0))
    configs = sample_cylinder_walks(lat, cfg["alpha"], sm["samples"], rs.generator(),
                                    sm["sweeps_per_sample"], sm["burn_in_sweeps"], sm["symmetrize"])
    st = fluctuation_stats(configs, lat)
    summ = st.summary(an["M"])
    rows = [["quantile", q, v] for q, v in summ["quantiles"].items()]
    rows += [["exceed", m, p] for m, p in summ["exceed"].items()]
    for k, (m, se) in enumerate(zip(summ["increment_mean"], summ["increment_se"])):
        rows += [["increment_mean", k, m], ["increment_se", k, se],
                 ["increment_ci_low", k, summ["increment_ci"][0][k]],
                 ["increment_ci_high", k, summ["increment_ci"][1][k]]]
    rows += [["increments", "", summ["increments"]], ["mean_chain_length", "", summ["mean_chain_length"]],
             ["scale", "", summ["scale"]]]
    zero_in_ci = all(lo <= 0 <= hi for lo, hi in zip(*summ["increment_ci"]))
    header = make_header(cfg, increment_mean_ci_contains_zero=zero_in_ci)
    text = csv_text(header, ["statistic", "key", "value"], rows)
    detail = csv_text(header, ["sample", "max_abs_transverse", "scaled", "chain_length"],
                      [[i, int(m), float(s), int(c)] for i, (m, s, c) in
                       enumerate(zip(st.max_transverse, st.scaled_max, st.chain_lengths))])
    summ["increment_mean_ci_contains_zero"] = zero_in_ci
    return text, detail, summ


# ---------------------------------------------------------------------------
# raw samples, census, constants

def run_sample(cfg: dict) -> str:
    g, lat = geometry(cfg)
    sm = cfg["sampler"]
    gen = RngStream(cfg["seed"], stream_id(cfg, cfg["alpha"], 0)).generator()
    if cfg["model"] == "closed":
        res = ClosedChain(g, cfg["alpha"], gen).run(sm["samples"], sm["sweeps_per_sample"],
                                                    sm["burn_in_sweeps"], codes=False, images=True)
        sinks = [""] * sm["samples"]
    else:
        if lat is None:
            raise ValueError("the open model needs a cylinder geometry")
        ch = OpenChain(g, range(g.n), lat.origin, lat.hyperplane(lat.n), cfg["alpha"], gen)
        res = ch.run(sm["samples"], sm["sweeps_per_sample"], sm["burn_in_sweeps"], codes=False, images=True)
        sinks = res.sinks.tolist()
    rows = [[i, int(res.energies[i]), sinks[i], " ".join(map(str, res.images[i].tolist()))]
            for i in range(sm["samples"])]
    return csv_text(make_header(cfg, acceptance=res.acceptance), ["sample", "energy", "sink", "image"], rows)


def run_census(cfg: dict) -> str:
    g, lat = geometry(cfg)
    an = cfg["analysis"]
    if an["origin"] is None:
        census = census_max_over(g, range(g.n), an["n_max"])
        origin = "all"
    else:
        census = saw_census(g, an["origin"], an["n_max"])
        origin = an["origin"]
    rows = [[n, a, b] for n, (a, b) in enumerate(zip(census.saw, census.sap))]
    return csv_text(make_header(cfg, origin=origin), ["n", "saw_count", "sap_count"], rows)


def alpha0_report(log_mu: float) -> dict:
    a0 = solve_alpha0(log_mu)
    resid = abs(a0 + 0.5 * math.log1p(math.exp(-2 * a0)) - log_mu)
    return {"log_mu": log_mu, "alpha0": a0, "residual": resid}


def write_text(path: str | None, text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
