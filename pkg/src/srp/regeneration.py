"""Cones, regeneration points and the regeneration chain of the open-cycle model.

Everything here lives on a :class:`~srp.lattice.CylinderLattice`. The walk
order is the order of appearance along the open cycle, and ``log n`` is the
integer ``ceil(ln n)`` unless a different base is requested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from srp.decay import minimal_invariant_closure
from srp.errors import CapacityError
from srp.exact import DEFAULT_ENUM_CAP, enumerate_closed, enumerate_open
from srp.lattice import CylinderLattice
from srp.perm import CyclePath, OpenCycleConfig, flatten_walk, walk_of
from srp.report import CheckResult, SuiteReport

LEVELS = ("weak", "admissible", "strict")


def log_scale(n: int, base: float = math.e) -> int:
    """``ceil(log n)`` in the given base, at least 1."""
    if n <= 1:
        return 1
    return max(1, math.ceil(math.log(n) / math.log(base) - 1e-12))


# ---------------------------------------------------------------------------
# cones and admissible sets

@dataclass(frozen=True)
class Cone:
    """Forward cone at ``apex``, widened to the full cross-section after ``log n`` columns."""

    lat: CylinderLattice
    apex: int
    log_n: int

    def __contains__(self, x: int) -> bool:
        cx, cy = self.lat.coord_of(x), self.lat.coord_of(self.apex)
        dx = cx[0] - cy[0]
        return dx >= self.log_n or dx >= self.lat.transverse_dist(x, self.apex)

    def members(self) -> frozenset[int]:
        return frozenset(v for v in range(self.lat.graph.n) if v in self)


def cone(lat: CylinderLattice, y: int, log_n: int | None = None) -> Cone:
    return Cone(lat, y, log_scale(lat.n) if log_n is None else log_n)


def _far_right(lat: CylinderLattice, y: int, log_n: int) -> frozenset[int]:
    y1 = lat.coord_of(y)[0]
    return frozenset(v for v, c in enumerate(lat.coords) if c[0] >= y1 + log_n)


def _axis_ray(lat: CylinderLattice, y: int) -> frozenset[int]:
    cy = lat.coord_of(y)
    return frozenset(v for v, c in enumerate(lat.coords) if c[0] >= cy[0] and c[1:] == cy[1:])


def admissibility(lat: CylinderLattice, y: int, S: Iterable[int], log_n: int | None = None) -> str | None:
    """Strongest level among weak/admissible/strict that ``S`` attains for base ``y``."""
    log_n = log_scale(lat.n) if log_n is None else log_n
    S = frozenset(S)
    if not _far_right(lat, y, log_n) <= S:
        return None
    if not _axis_ray(lat, y) <= S:
        return "weak"
    if not cone(lat, y, log_n).members() <= S:
        return "admissible"
    return "strict"


def is_admissible(lat: CylinderLattice, y: int, S: Iterable[int], level: str = "admissible",
                  log_n: int | None = None) -> bool:
    got = admissibility(lat, y, S, log_n)
    return got is not None and LEVELS.index(got) >= LEVELS.index(level)


@dataclass(frozen=True)
class AdmissibleSet:
    set: frozenset
    level: str
    base: int

    @classmethod
    def of(cls, lat: CylinderLattice, y: int, S: Iterable[int], log_n: int | None = None) -> "AdmissibleSet":
        S = frozenset(S)
        level = admissibility(lat, y, S, log_n)
        if level is None:
            raise ValueError("set is not even weakly admissible")
        return cls(S, level, y)


# ---------------------------------------------------------------------------
# building configurations by hand

def open_config(lat: CylinderLattice, walk: Sequence[int], cycles: Iterable[Sequence[int]] = (),
                domain: Iterable[int] | None = None) -> OpenCycleConfig:
    """Configuration whose open cycle is ``walk`` and whose background has the given cycles."""
    g = lat.graph
    img = list(range(g.n))
    for u, v in zip(walk, walk[1:]):
        img[u] = v
    for cyc in cycles:
        for u, v in zip(cyc, list(cyc[1:]) + [cyc[0]]):
            img[u] = v
    dom = range(g.n) if domain is None else domain
    return OpenCycleConfig(g, img, dom, walk[0], walk[-1])


# ---------------------------------------------------------------------------
# pre-regeneration points

def _walk_vertices(walk) -> tuple[int, ...]:
    if isinstance(walk, OpenCycleConfig):
        return walk_of(walk).vertices
    if isinstance(walk, CyclePath):
        return walk.vertices
    return tuple(walk)


def pre_regeneration_points(walk, lat: CylinderLattice, log_n: int | None = None) -> list[int]:
    """Walk points hit once by their hyperplane and followed only by points of their cone.

    ``walk`` is a :class:`CyclePath`, a vertex sequence or an open configuration.
    """
    log_n = log_scale(lat.n) if log_n is None else log_n
    vs = _walk_vertices(walk)
    arr = _LatticeArrays.of(lat)
    idx = np.array(vs, dtype=np.int64)
    x1, xh = arr.x1[idx], arr.xh[idx]
    w = lat.width
    out = []
    prefix_max = -1
    for i, x in enumerate(vs):
        if x1[i] > prefix_max:
            dx = x1[i + 1:] - x1[i]
            r = np.abs(xh[i + 1:] - xh[i]) % w
            td = np.minimum(r, w - r).max(axis=1) if r.shape[1] else np.zeros(len(dx), dtype=np.int64)
            if ((dx >= log_n) | (dx >= td)).all():
                out.append(x)
        prefix_max = max(prefix_max, int(x1[i]))
    return out


def is_pre_regeneration(walk, lat: CylinderLattice, x: int, log_n: int | None = None) -> bool:
    return x in pre_regeneration_points(walk, lat, log_n)


# ---------------------------------------------------------------------------
# regeneration sets

def reflection_maps(lat: CylinderLattice, x: int) -> list[tuple[int, ...]]:
    """Transverse reflections ``t -> 2 x_k - t``, one per transverse coordinate.

    Reflecting a cycle about one of its own vertices is always a graph
    automorphism, so no axis has to be excluded.
    """
    c = lat.coord_of(x)
    maps = []
    for k in range(1, lat.d):
        img = []
        for cz in lat.coords:
            nc = list(cz)
            nc[k] = 2 * c[k] - cz[k]
            img.append(lat.vertex(*nc))
        maps.append(tuple(img))
    return maps


def left_closure(c: OpenCycleConfig, lat: CylinderLattice, x: int, pi0=None) -> frozenset[int]:
    """Least set containing ``{z1 < x1}`` and the complement of the domain, closed under the
    flattened configuration and the reflections about ``x``."""
    pi0 = flatten_walk(c) if pi0 is None else pi0
    x1 = lat.coord_of(x)[0]
    seed = [v for v, cz in enumerate(lat.coords) if cz[0] < x1 or v not in c.domain]
    return minimal_invariant_closure(pi0, reflection_maps(lat, x), seed)


def regeneration_set(c: OpenCycleConfig, lat: CylinderLattice, x: int, log_n: int | None = None,
                     check_pre: bool = True, pi0=None) -> frozenset[int] | None:
    """Largest ``R`` with (R1)-(R4) at ``x``, or ``None`` when ``x`` is not a regeneration point."""
    log_n = log_scale(lat.n) if log_n is None else log_n
    if check_pre and not is_pre_regeneration(c, lat, x, log_n):
        raise ValueError(f"{x} is not a pre-regeneration point of the walk")
    Q = left_closure(c, lat, x, pi0)
    R = frozenset(c.domain) - Q
    if not cone(lat, x, log_n).members() <= R:
        return None
    return R


def satisfies_r1_r4(c: OpenCycleConfig, lat: CylinderLattice, x: int, R: Iterable[int],
                    log_n: int | None = None, pi0=None) -> tuple[bool, bool, bool, bool]:
    """The four defining properties of a regeneration set, each checked on its own."""
    log_n = log_scale(lat.n) if log_n is None else log_n
    R = frozenset(R)
    pi0 = flatten_walk(c) if pi0 is None else pi0
    x1 = lat.coord_of(x)[0]
    r1 = R <= c.domain and all(lat.coord_of(z)[0] >= x1 for z in R)
    r2 = is_admissible(lat, x, R, "strict", log_n)
    r3 = all(frozenset(m[z] for z in R) == R for m in reflection_maps(lat, x))
    r4 = frozenset(pi0.image[z] for z in R) == R
    return r1, r2, r3, r4


# ---------------------------------------------------------------------------
# the regeneration chain

@dataclass
class RegenRecord:
    points: list[int]
    sets: list[frozenset]
    walk: CyclePath
    log_n: int

    @property
    def terminal(self) -> int:
        return self.walk.vertices[-1]

    def rows(self, lat: CylinderLattice) -> list[tuple]:
        return [(i, *lat.coord_of(x), len(R)) for i, (x, R) in enumerate(zip(self.points, self.sets))]


class _LatticeArrays:
    """Coordinate arrays and reflection tables of one lattice, built once."""

    _cache: dict = {}

    def __init__(self, lat: CylinderLattice):
        self.lat = lat
        co = np.array(lat.coords, dtype=np.int64)
        self.x1 = co[:, 0]
        self.xh = co[:, 1:]
        self.refl: dict[tuple, np.ndarray] = {}

    @classmethod
    def of(cls, lat: CylinderLattice) -> "_LatticeArrays":
        hit = cls._cache.get(id(lat))
        if hit is None or hit.lat is not lat:
            hit = cls(lat)
            cls._cache[id(lat)] = hit
        return hit

    def reflections(self, x: int) -> np.ndarray:
        key = tuple(self.xh[x])
        if key not in self.refl:
            self.refl[key] = np.array(reflection_maps(self.lat, x), dtype=np.int64).reshape(-1, len(self.x1))
        return self.refl[key]

    def cone_mask(self, x: int, log_n: int) -> np.ndarray:
        dx = self.x1 - self.x1[x]
        w = self.lat.width
        r = np.abs(self.xh - self.xh[x]) % w
        td = np.minimum(r, w - r).max(axis=1) if r.shape[1] else np.zeros(len(dx), dtype=np.int64)
        return (dx >= log_n) | (dx >= td)


class _RegenCache:
    """Per-configuration data shared by the many regeneration-set queries of one walk.

    Closures are computed on whole cycles of the flattened configuration at once.
    """

    def __init__(self, c: OpenCycleConfig, lat: CylinderLattice, log_n: int):
        self.c, self.lat, self.log_n = c, lat, log_n
        self.arr = _LatticeArrays.of(lat)
        self.walk = walk_of(c)
        self.pre = pre_regeneration_points(self.walk, lat, log_n)
        self.pre_set = frozenset(self.pre)
        self.sets: dict[int, frozenset | None] = {}
        n = lat.graph.n
        img = np.array(c.image, dtype=np.int64)
        img[list(self.walk.vertices)] = list(self.walk.vertices)
        cyc = np.full(n, -1, dtype=np.int64)
        k = 0
        for v in range(n):
            if cyc[v] < 0:
                u = v
                while cyc[u] < 0:
                    cyc[u] = k
                    u = img[u]
                k += 1
        self.cycle_id = cyc
        self.ncycles = k
        self.outside = np.ones(n, dtype=bool)
        self.outside[list(c.domain)] = False

    def closure(self, x: int) -> np.ndarray:
        arr = self.arr
        Q = (arr.x1 < arr.x1[x]) | self.outside
        refl = arr.reflections(x)
        while True:
            hit = np.zeros(self.ncycles, dtype=bool)
            hit[self.cycle_id[Q]] = True
            nQ = hit[self.cycle_id]
            for m in refl:
                nQ = nQ | nQ[m]
            if (nQ == Q).all():
                return Q
            Q = nQ

    def regen(self, x: int) -> frozenset | None:
        if x not in self.sets:
            if x not in self.pre_set:
                self.sets[x] = None
            else:
                Q = self.closure(x)
                if (Q & self.arr.cone_mask(x, self.log_n)).any():
                    self.sets[x] = None
                else:
                    self.sets[x] = frozenset(np.flatnonzero(~Q).tolist())
        return self.sets[x]


def regeneration_points(c: OpenCycleConfig, lat: CylinderLattice, log_n: int | None = None) -> list[int]:
    """Regeneration points in walk order, including the source and the terminal point."""
    log_n = log_scale(lat.n) if log_n is None else log_n
    cache = _RegenCache(c, lat, log_n)
    vs = cache.walk.vertices
    return [vs[0]] + [x for x in vs[1:-1] if cache.regen(x) is not None] + [vs[-1]]


def extract_regen_chain(c: OpenCycleConfig, lat: CylinderLattice, log_n: int | None = None) -> RegenRecord:
    """``(X_i, R_i)``: from the source, repeatedly take the first regeneration point at least
    ``log n`` columns further right; jump to the end of the walk once within ``log n`` of ``l_n``."""
    log_n = log_scale(lat.n) if log_n is None else log_n
    cache = _RegenCache(c, lat, log_n)
    vs = cache.walk.vertices
    end = vs[-1]
    first = [lat.coord_of(v)[0] for v in vs]
    points, sets = [vs[0]], [frozenset(range(lat.graph.n))]
    i = 0
    while points[-1] != end:
        x1 = first[i]
        nxt = None
        if x1 + log_n <= lat.n:
            for j in range(i + 1, len(vs) - 1):
                if first[j] >= x1 + log_n and cache.regen(vs[j]) is not None:
                    nxt = j
                    break
        if nxt is None:
            points.append(end)
            sets.append(frozenset())
            break
        points.append(vs[nxt])
        sets.append(cache.regen(vs[nxt]))
        i = nxt
    return RegenRecord(points, sets, cache.walk, log_n)


# ---------------------------------------------------------------------------
# rho_L

@dataclass
class RhoDecomposition:
    x_L: int
    rho: CyclePath
    tail: CyclePath

    @property
    def size(self) -> int:
        return len(self.rho.vertices)


def rho_decomposition(c, lat: CylinderLattice, L: int) -> RhoDecomposition:
    """Split the walk at its last visit ``x_L`` to the column ``y1 + L``."""
    vs = _walk_vertices(c)
    target = lat.coord_of(vs[0])[0] + L
    idx = [i for i, v in enumerate(vs) if lat.coord_of(v)[0] == target]
    if not idx:
        raise ValueError(f"walk never reaches column {target}")
    k = idx[-1]
    return RhoDecomposition(vs[k], CyclePath(tuple(vs[:k]), False), CyclePath(tuple(vs[k:]), False))


def walk_size(walk, measure: str = "vertices") -> int:
    vs = _walk_vertices(walk)
    if measure == "vertices":
        return len(vs)
    if measure == "steps":
        return len(vs) - 1
    raise ValueError(f"unknown measure {measure!r}")


def check_numbregpoint(walk, lat: CylinderLattice, L: int, delta: float, measure: str = "vertices",
                       log_n: int | None = None) -> CheckResult | None:
    """At least ``(1 - 3 delta) L`` pre-regeneration points on a short walk spanning ``L`` columns.

    Returns ``None`` (skip) when the walk does not span exactly ``L`` columns or is
    not shorter than ``(1 + delta) L`` in the chosen measure.
    """
    vs = _walk_vertices(walk)
    span = lat.coord_of(vs[-1])[0] - lat.coord_of(vs[0])[0]
    size = walk_size(vs, measure)
    if span != L or size >= (1 + delta) * L:
        return None
    count = len(pre_regeneration_points(vs, lat, log_n))
    bound = (1 - 3 * delta) * L
    params = {"L": L, "delta": delta, "measure": measure, "walk": list(vs)}
    return CheckResult("numbregpoint", params, count, bound, count - bound, count >= bound)


def spanning_walks(lat: CylinderLattice, L: int, max_size: float, measure: str = "vertices",
                   starts: Iterable[int] | None = None):
    """Every self-avoiding walk from ``x`` to column ``x1 + L`` (ending on first arrival is not
    required) whose size stays below ``max_size``."""
    g = lat.graph
    max_vertices = math.ceil(max_size) - 1 + (1 if measure == "steps" else 0)
    if starts is None:
        starts = [v for v, c in enumerate(lat.coords) if c[0] + L <= lat.n]
    for s in starts:
        target = lat.coord_of(s)[0] + L
        path, seen = [s], {s}

        def rec():
            v = path[-1]
            if lat.coord_of(v)[0] == target and walk_size(path, measure) < max_size:
                yield tuple(path)
            if len(path) >= max_vertices:
                return
            for w in g.adj[v]:
                if w not in seen:
                    seen.add(w)
                    path.append(w)
                    yield from rec()
                    path.pop()
                    seen.discard(w)

        yield from rec()


def numbregpoint_suite(lat: CylinderLattice, L: int, deltas: Sequence[float],
                       measures: Sequence[str] = ("vertices", "steps")) -> SuiteReport:
    """Exhaustive deterministic check over all qualifying walks; one result per (delta, measure)."""
    report = SuiteReport(f"numbregpoint(n={lat.n},w={lat.width},L={L})")
    for measure in measures:
        for delta in deltas:
            checked, worst, bad = 0, math.inf, None
            for w in spanning_walks(lat, L, (1 + delta) * L, measure):
                r = check_numbregpoint(w, lat, L, delta, measure)
                if r is None:
                    continue
                checked += 1
                if r.margin < worst:
                    worst = r.margin
                    if not r.passed:
                        bad = list(w)
            params = {"L": L, "delta": delta, "measure": measure, "walks": checked,
                      "counterexample": bad}
            report.results.append(CheckResult("numbregpoint", params, worst, 0.0,
                                              worst if checked else 0.0, bad is None))
    return report


# ---------------------------------------------------------------------------
# tail of rho_L

@dataclass
class RhoTailEstimate:
    value: float | None
    lo: float | None
    hi: float | None
    exact: bool
    conditioning_mass: float
    samples: int
    defined: bool = True


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def estimate_rho_tail(lat: CylinderLattice, y: int, A: Iterable[int], B: Iterable[int], L: int,
                      delta: float, alpha: float, rng=None, samples: int = 2000,
                      cap: int = DEFAULT_ENUM_CAP, **sampler_kw) -> RhoTailEstimate:
    """``P_A^{y->l_n}(|rho_L| >= (1 + delta) L | rho_L in B)``; exact when enumerable."""
    A, B = frozenset(A), frozenset(B)
    g = lat.graph
    sinks = [v for v in lat.hyperplane(lat.n) if v in A]
    thresh = (1 + delta) * L
    try:
        num = den = 0.0
        hmin = None
        states = list(enumerate_open(g, A, y, sinks, cap))
        for img, h, z in states:
            hmin = h if hmin is None else min(hmin, h)
        for img, h, z in states:
            c = OpenCycleConfig(g, img, A | {z}, y, z, check=False)
            rd = rho_decomposition(c, lat, L)
            if rd.rho.vertex_set() <= B:
                w = math.exp(-alpha * (h - hmin))
                den += w
                if rd.size >= thresh:
                    num += w
        if den == 0:
            return RhoTailEstimate(None, None, None, True, 0.0, len(states), defined=False)
        p = num / den
        return RhoTailEstimate(p, p, p, True, den, len(states))
    except CapacityError:
        pass
    from srp.samplers import sample_open
    configs = sample_open(g, A, y, sinks, alpha, rng, samples, **sampler_kw)
    hit = kept = 0
    for c in configs:
        rd = rho_decomposition(c, lat, L)
        if rd.rho.vertex_set() <= B:
            kept += 1
            hit += rd.size >= thresh
    if kept == 0:
        return RhoTailEstimate(None, None, None, False, 0.0, len(configs), defined=False)
    lo, hi = wilson_interval(hit, kept)
    return RhoTailEstimate(hit / kept, lo, hi, False, kept / len(configs), len(configs))


# ---------------------------------------------------------------------------
# fluctuations

def lifted_transverse(walk, lat: CylinderLattice) -> np.ndarray:
    """Transverse coordinates along the walk, unwrapped so each step changes them by at most 1."""
    vs = _walk_vertices(walk)
    out = np.zeros((len(vs), lat.d - 1), dtype=np.int64)
    base = lat.coord_of(vs[0])[1:]
    out[0] = base
    for i in range(1, len(vs)):
        out[i] = out[i - 1] + np.array(lat.transverse_offset(vs[i - 1], vs[i]), dtype=np.int64)
    return out


@dataclass
class FluctuationStats:
    samples: int
    scale: float
    max_transverse: np.ndarray
    increments: np.ndarray
    weights: np.ndarray
    increment_owner: np.ndarray
    chain_lengths: np.ndarray

    @property
    def scaled_max(self) -> np.ndarray:
        return self.max_transverse / self.scale

    def quantiles(self, qs=(0.1, 0.25, 0.5, 0.75, 0.9, 0.99)) -> dict[float, float]:
        order = np.argsort(self.scaled_max, kind="stable")
        vals = self.scaled_max[order]
        cw = np.cumsum(self.weights[order])
        cw /= cw[-1]
        return {q: float(vals[min(np.searchsorted(cw, q - 1e-12), len(vals) - 1)]) for q in qs}

    def exceed_probability(self, M: float) -> float:
        w = self.weights / self.weights.sum()
        return float(w[self.scaled_max > M].sum())

    def increment_mean(self) -> tuple[np.ndarray, np.ndarray]:
        """Weighted mean transverse increment and its standard error.

        Increments of one walk are strongly dependent, so the error treats each
        walk as one cluster (ratio estimator).
        """
        d = self.increments.shape[1]
        if len(self.increments) == 0:
            return np.zeros(d), np.full(d, np.inf)
        k = self.samples
        sums = np.zeros((k, d))
        np.add.at(sums, self.increment_owner, self.increments)
        counts = np.bincount(self.increment_owner, minlength=k).astype(float)
        w = self.weights
        total = w @ counts
        mean = (w @ sums) / total
        resid = sums - np.outer(counts, mean)
        var = (w ** 2) @ (resid ** 2) / total ** 2
        return mean, np.sqrt(var * k / max(k - 1, 1))

    def increment_ci(self, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
        m, se = self.increment_mean()
        return m - z * se, m + z * se

    def summary(self, M: Sequence[float] = (0.25, 0.5, 1.0, 2.0)) -> dict:
        m, se = self.increment_mean()
        lo, hi = self.increment_ci()
        return {"samples": self.samples, "scale": self.scale,
                "quantiles": self.quantiles(),
                "exceed": {float(x): self.exceed_probability(x) for x in M},
                "increments": int(len(self.increments)),
                "increment_mean": m.tolist(), "increment_se": se.tolist(),
                "increment_ci": [lo.tolist(), hi.tolist()],
                "mean_chain_length": float(np.average(self.chain_lengths, weights=self.weights))}


def fluctuation_stats(samples: Sequence[OpenCycleConfig], lat: CylinderLattice,
                      weights: Sequence[float] | None = None, log_n: int | None = None) -> FluctuationStats:
    """Maximal transverse excursion of each walk and the transverse increments of its
    regeneration chain, measured in lifted coordinates relative to the source."""
    if not samples:
        raise ValueError("need at least one sample")
    log_n = log_scale(lat.n) if log_n is None else log_n
    w = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    maxes, incs, owner, lens = [], [], [], []
    for s, c in enumerate(samples):
        rec = extract_regen_chain(c, lat, log_n)
        lift = lifted_transverse(rec.walk, lat)
        rel = lift - lift[0]
        maxes.append(int(np.abs(rel).max()))
        pos = {v: i for i, v in enumerate(rec.walk.vertices)}
        idx = [pos[x] for x in rec.points]
        for a, b in zip(idx, idx[1:]):
            incs.append(rel[b] - rel[a])
            owner.append(s)
        lens.append(len(rec.points))
    scale = math.sqrt(lat.n * math.log(lat.n)) if lat.n > 1 else 1.0
    d = lat.d - 1
    return FluctuationStats(len(samples), scale, np.array(maxes, dtype=float),
                            np.array(incs, dtype=float).reshape(-1, d), w,
                            np.array(owner, dtype=np.int64), np.array(lens))


def reflect_config(c: OpenCycleConfig, lat: CylinderLattice, axis: int, k: int = 1) -> OpenCycleConfig:
    """Image of ``c`` under the transverse reflection of coordinate ``k`` about ``axis``."""
    m = reflection_maps(lat, axis)[k - 1]
    img = [0] * len(c.image)
    for v, w in enumerate(c.image):
        img[m[v]] = m[w]
    return OpenCycleConfig(c.graph, img, frozenset(m[v] for v in c.domain), m[c.source], m[c.sink],
                           check=False)


def sample_cylinder_walks(lat: CylinderLattice, alpha: float, samples: int, rng,
                          sweeps_per_sample: int = 10, burn_in_sweeps: int = 200,
                          symmetrize: bool = True, exact_cap: int = 50_000) -> list[OpenCycleConfig]:
    """Open-cycle configurations ``S^{0->l_n}`` on the whole cylinder.

    Small cylinders are sampled exactly. Otherwise the Metropolis chain is used,
    and with ``symmetrize`` each output is passed through an independent
    uniformly chosen element of the reflection group about the source axis;
    the measure is invariant under that group, so this is itself a valid
    Markov step and removes the slowly mixing sign of the transverse drift.
    """
    from srp.samplers import EXACT_DOMAIN_LIMIT, OpenChain, _gen
    g = lat.graph
    gen = _gen(rng)
    src, ell = lat.origin, lat.hyperplane(lat.n)
    dom = frozenset(range(g.n))
    if g.n <= EXACT_DOMAIN_LIMIT:
        try:
            states = list(enumerate_open(g, dom, src, ell, cap=exact_cap))
        except CapacityError:
            states = None
        if states:
            hs = np.array([h for _, h, _ in states], dtype=float)
            w = np.exp(-alpha * (hs - hs.min()))
            picks = gen.choice(len(states), size=samples, p=w / w.sum())
            return [OpenCycleConfig(g, states[i][0], dom, src, states[i][2]) for i in picks]
    chain = OpenChain(g, range(g.n), src, ell, alpha, gen)
    res = chain.run(samples, sweeps_per_sample, burn_in_sweeps, codes=False, images=True)
    out = []
    flips = gen.integers(0, 2, size=(samples, lat.d - 1)) if symmetrize else None
    for i in range(samples):
        c = OpenCycleConfig(g, res.images[i].tolist(), dom, src, int(res.sinks[i]), check=False)
        if symmetrize:
            for k in range(1, lat.d):
                if flips[i, k - 1]:
                    c = reflect_config(c, lat, src, k)
        out.append(c)
    return out


# ---------------------------------------------------------------------------
# Markov property of the open model across almost-invariant sets

def _forward_library(g, S) -> list[tuple[int, int]]:
    return [(z, w) for z in sorted(S) for w in (z,) + tuple(g.adj[z])]


def _restricted_law(g, A, x, sinks, alpha, cap):
    """Law of ``S_A^{x->sinks}``; when ``x`` is itself a sink, ``x`` is fixed and the rest closed."""
    out = []
    if x in sinks:
        rest = [v for v in A if v != x]
        for img, h in enumerate_closed(g, rest, cap):
            out.append((img, h))
    other = [z for z in sinks if z != x]
    if other:
        for img, h, _ in enumerate_open(g, A, x, other, cap):
            out.append((img, h))
    if not out:
        return np.zeros((0, g.n), dtype=np.int64), np.zeros(0), np.zeros(0)
    hs = np.array([h for _, h in out], dtype=float)
    w = np.exp(-alpha * (hs - hs.min()))
    return np.array([img for img, _ in out], dtype=np.int64), w / w.sum(), hs


def check_open_markov(lat: CylinderLattice, alpha: float, subsets: Iterable[Iterable[int]] | None = None,
                      tol: float = 1e-9, cap: int = DEFAULT_ENUM_CAP) -> SuiteReport:
    """Factorisation of the open-cycle measure on ``{A in Inv0, x = min gamma cap A}``.

    Checks the event probability against the product of restricted partition
    functions and ``E(f g | event) = E_{A^c+x}^{a->x}(f) E_A^{x->l_n}(g)`` for all
    forward-evaluation indicators ``f`` on ``A^c`` and ``g`` on ``A``.
    """
    g = lat.graph
    a = lat.origin
    V = frozenset(range(g.n))
    ell = lat.hyperplane(lat.n)
    states = list(enumerate_open(g, V, a, ell, cap))
    imgs = np.array([s[0] for s in states], dtype=np.int64)
    hs = np.array([s[1] for s in states], dtype=float)
    hmin = hs.min()
    wts = np.exp(-alpha * (hs - hmin))
    logZ = math.log(wts.sum()) - alpha * hmin
    probs = wts / wts.sum()
    # walk order of each configuration
    orders = []
    for img, _, z in states:
        seq, v = [a], a
        while v != z:
            v = img[v]
            seq.append(v)
        orders.append(seq)
    if subsets is None:
        others = sorted(V - {a})
        subsets = [frozenset(v for k, v in enumerate(others) if (m >> k) & 1) for m in range(1, 1 << len(others))]
    report = SuiteReport(f"open-markov(n={lat.n},w={lat.width},alpha={alpha})")
    for A in subsets:
        A = frozenset(A)
        if a in A or not A:
            continue
        Ac = V - A
        inA = np.zeros(g.n, dtype=bool)
        inA[list(A)] = True
        inv = inA[imgs[:, sorted(A)]].all(axis=1)
        entry = np.array([next((v for v in seq if inA[v]), -1) for seq in orders])
        sinksA = [z for z in ell if z in A]
        for x in sorted(A):
            ev = inv & (entry == x)
            p_ev = float(probs[ev].sum())
            lawc = _restricted_law(g, Ac | {x}, a, [x], alpha, cap)
            lawa = _restricted_law(g, A, x, sinksA, alpha, cap)
            params = {"A": sorted(A), "x": x, "alpha": alpha}
            if len(lawc[0]) == 0 or len(lawa[0]) == 0:
                report.results.append(CheckResult("open-markov-i", params, p_ev, 0.0, tol - p_ev, p_ev <= tol))
                continue
            zc = math.log(np.exp(-alpha * (lawc[2] - lawc[2].min())).sum()) - alpha * lawc[2].min()
            za = math.log(np.exp(-alpha * (lawa[2] - lawa[2].min())).sum()) - alpha * lawa[2].min()
            rhs = math.exp(zc + za - logZ)
            report.results.append(CheckResult("open-markov-i", params, p_ev, rhs, tol - abs(p_ev - rhs),
                                              abs(p_ev - rhs) <= tol))
            if p_ev <= 0:
                continue
            fl = [(z, w) for z, w in _forward_library(g, Ac) if w in Ac or w == x]
            gl = [(z, w) for z, w in _forward_library(g, A) if w in A]
            F = np.stack([imgs[:, z] == w for z, w in fl], axis=1).astype(float)
            G = np.stack([imgs[:, z] == w for z, w in gl], axis=1).astype(float)
            pw = probs * ev / p_ev
            joint = (F * pw[:, None]).T @ G
            ef = np.array([(lawc[0][:, z] == w) @ lawc[1] for z, w in fl])
            eg = np.array([(lawa[0][:, z] == w) @ lawa[1] for z, w in gl])
            err = float(np.max(np.abs(joint - np.outer(ef, eg))))
            report.results.append(CheckResult("open-markov-iii", params, err, 0.0, tol - err, err <= tol))
    return report


# ---------------------------------------------------------------------------
# brute-force maximality

def brute_force_regeneration_set(c: OpenCycleConfig, lat: CylinderLattice, x: int,
                                 log_n: int | None = None, max_free: int = 16) -> frozenset | None:
    """Union of every subset of the right half satisfying (R1)-(R4), by exhaustive scan."""
    log_n = log_scale(lat.n) if log_n is None else log_n
    x1 = lat.coord_of(x)[0]
    right = sorted(v for v in c.domain if lat.coord_of(v)[0] >= x1)
    if len(right) > max_free:
        raise CapacityError(f"{len(right)} free vertices exceed {max_free}")
    pos = {v: k for k, v in enumerate(right)}
    pi0 = flatten_walk(c).image
    maps = [pi0] + reflection_maps(lat, x)
    # a map leaves R invariant iff no member is sent outside the right half or to a non-member
    targets = []
    for m in maps:
        row = [pos.get(m[v], -1) for v in right]
        targets.append(row)
    need = 0
    for v in cone(lat, x, log_n).members():
        if v not in pos:
            return None
        need |= 1 << pos[v]
    union, found = 0, False
    for R in range(1 << len(right)):
        if R & need != need:
            continue
        ok = True
        for row in targets:
            img = 0
            for k in range(len(right)):
                if (R >> k) & 1:
                    t = row[k]
                    if t < 0:
                        ok = False
                        break
                    img |= 1 << t
            if not ok or img != R:
                ok = False
                break
        if ok:
            union |= R
            found = True
    return frozenset(v for k, v in enumerate(right) if (union >> k) & 1) if found else None
