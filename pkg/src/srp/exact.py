"""Exact enumeration of the closed and open ensembles on small graphs.

Two independent counters are provided for the closed model:

* :func:`enumerate_closed`, a DFS assigning ``pi(x)`` vertex by vertex, and
* :func:`cycle_polynomial`, which peels off the cycle through the lowest
  vertex of a bitmask and recurses on the rest.

Both produce the energy histogram ``{H: count}``, i.e. the integer
coefficients of ``Z`` as a polynomial in ``q = exp(-alpha)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from srp.errors import CapacityError
from srp.lattice import Graph

DEFAULT_ENUM_CAP = 10**8

Poly = tuple[int, ...]  # coefficient of q**k at index k


# ---------------------------------------------------------------------------
# integer polynomials in q

def poly_add(a: Poly, b: Poly) -> Poly:
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for i, c in enumerate(b):
        out[i] += c
    return tuple(out)


def poly_shift(a: Poly, k: int) -> Poly:
    return (0,) * k + tuple(a)


def poly_mul(a: Poly, b: Poly) -> Poly:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return tuple(out)


def hist_to_poly(hist: dict[int, int]) -> Poly:
    if not hist:
        return (0,)
    out = [0] * (max(hist) + 1)
    for k, c in hist.items():
        out[k] += c
    return tuple(out)


def poly_to_hist(p: Poly) -> dict[int, int]:
    return {k: c for k, c in enumerate(p) if c}


def log_poly_value(p: Poly, alpha: float) -> float:
    """``log sum_k p[k] exp(-alpha k)`` computed in log space."""
    terms = [math.log(c) - alpha * k for k, c in enumerate(p) if c > 0]
    if not terms:
        return -math.inf
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms))


def poly_value_mp(p: Poly, alpha, dps: int = 60):
    """High-precision value of the polynomial at ``q = exp(-alpha)`` (mpmath)."""
    import mpmath
    with mpmath.workdps(dps):
        q = mpmath.exp(-mpmath.mpf(alpha))
        return mpmath.fsum(c * q**k for k, c in enumerate(p) if c)


# ---------------------------------------------------------------------------
# partition functions and distributions

@dataclass
class PartitionFunction:
    """``Z`` at ``alpha`` together with the integer energy histogram it came from."""

    alpha: float
    log_value: float
    exact_terms: dict[int, int] | None = None

    @classmethod
    def from_hist(cls, hist: dict[int, int], alpha: float) -> "PartitionFunction":
        return cls(alpha, log_poly_value(hist_to_poly(hist), alpha), dict(hist))

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def count(self) -> int:
        return sum(self.exact_terms.values()) if self.exact_terms else 0

    def at(self, alpha: float) -> "PartitionFunction":
        if self.exact_terms is None:
            raise ValueError("no histogram stored; cannot re-evaluate at another alpha")
        return PartitionFunction.from_hist(self.exact_terms, alpha)

    def histogram_json(self) -> str:
        return json.dumps({str(k): v for k, v in sorted((self.exact_terms or {}).items())})


@dataclass
class ExactDistribution:
    """Finite law: configurations (image tuples), energies and probabilities."""

    support: list[tuple[int, ...]]
    energies: list[int]
    probabilities: list[float]
    alpha: float
    log_z: float

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.support, self.probabilities))

    def prob(self, image: Sequence[int]) -> float:
        return self.as_dict().get(tuple(image), 0.0)


# ---------------------------------------------------------------------------
# closed model: DFS enumeration

def _domain_list(g: Graph, domain) -> list[int]:
    return list(range(g.n)) if domain is None else sorted(set(domain))


def enumerate_closed(g: Graph, domain: Iterable[int] | None = None,
                     cap: int = DEFAULT_ENUM_CAP) -> Iterator[tuple[tuple[int, ...], int]]:
    """Yield ``(image, energy)`` for every permutation of ``domain`` (others fixed).

    DFS over the domain in ascending order; ``pi(x)`` ranges over ``x`` and its
    free neighbours inside the domain. Raises :class:`CapacityError` once more
    than ``cap`` search nodes have been visited.
    """
    dom = _domain_list(g, domain)
    inside = set(dom)
    choices = [[x] + [y for y in g.adj[x] if y in inside] for x in dom]
    image = list(range(g.n))
    used = [False] * g.n
    visited = 0

    def rec(i: int, h: int):
        nonlocal visited
        visited += 1
        if visited > cap:
            raise CapacityError(f"enumeration exceeded {cap} search nodes")
        if i == len(dom):
            yield tuple(image), h
            return
        x = dom[i]
        for y in choices[i]:
            if not used[y]:
                used[y] = True
                image[x] = y
                yield from rec(i + 1, h + (y != x))
                used[y] = False
        image[x] = x

    yield from rec(0, 0)


def closed_histogram(g: Graph, domain=None, cap: int = DEFAULT_ENUM_CAP) -> dict[int, int]:
    hist: dict[int, int] = {}
    for _, h in enumerate_closed(g, domain, cap):
        hist[h] = hist.get(h, 0) + 1
    return hist


def partition_closed(g: Graph, alpha: float, domain=None,
                     cap: int = DEFAULT_ENUM_CAP) -> PartitionFunction:
    """Exact ``Z(U)`` with its energy histogram; ``Z(empty) = 1``."""
    return PartitionFunction.from_hist(closed_histogram(g, domain, cap), alpha)


def closed_distribution(g: Graph, alpha: float, domain=None,
                        cap: int = DEFAULT_ENUM_CAP) -> ExactDistribution:
    support, energies = [], []
    for img, h in enumerate_closed(g, domain, cap):
        support.append(img)
        energies.append(h)
    hist: dict[int, int] = {}
    for h in energies:
        hist[h] = hist.get(h, 0) + 1
    log_z = log_poly_value(hist_to_poly(hist), alpha)
    probs = [math.exp(-alpha * h - log_z) for h in energies]
    return ExactDistribution(support, energies, probs, alpha, log_z)


# ---------------------------------------------------------------------------
# closed model: cycle-recursion counter (independent of the DFS)

def directed_cycles_through(g: Graph, x: int, mask: int) -> Iterator[tuple[int, int]]:
    """Yield ``(length, vertex_mask)`` for each directed cycle through ``x`` inside ``mask``.

    Includes the back-and-forth 2-cycles, one per neighbour; excludes the
    fixed point.
    """
    start = x

    def rec(v: int, seen: int, k: int):
        for w in g.adj[v]:
            if w == start and k >= 2:
                yield k, seen
            elif not (seen >> w) & 1 and (mask >> w) & 1:
                yield from rec(w, seen | (1 << w), k + 1)

    yield from rec(start, 1 << start, 1)


class CycleCounter:
    """Memoised ``Z`` polynomials of induced subsets, keyed by bitmask."""

    def __init__(self, g: Graph, cap: int = DEFAULT_ENUM_CAP):
        self.g = g
        self.cap = cap
        self._memo: dict[int, Poly] = {0: (1,)}
        self._work = 0

    def poly(self, mask: int) -> Poly:
        memo = self._memo
        if mask in memo:
            return memo[mask]
        x = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << x)
        total = self.poly(rest)
        for k, cyc in directed_cycles_through(self.g, x, mask):
            self._work += 1
            if self._work > self.cap:
                raise CapacityError(f"cycle recursion exceeded {self.cap} steps")
            total = poly_add(total, poly_shift(self.poly(mask & ~cyc), k))
        memo[mask] = total
        return total

    def poly_of(self, subset: Iterable[int]) -> Poly:
        return self.poly(to_mask(subset))

    def log_z(self, subset: Iterable[int], alpha: float) -> float:
        return log_poly_value(self.poly_of(subset), alpha)


def to_mask(subset: Iterable[int]) -> int:
    m = 0
    for v in subset:
        m |= 1 << v
    return m


def from_mask(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def cycle_polynomial(g: Graph, domain: Iterable[int] | None = None) -> Poly:
    """``Z(U)`` as an integer polynomial in ``q`` by the cycle recursion."""
    dom = range(g.n) if domain is None else domain
    return CycleCounter(g).poly_of(dom)


def count_closed(g: Graph, domain=None) -> int:
    """``|S_U|`` by the cycle recursion."""
    return sum(cycle_polynomial(g, domain))


# ---------------------------------------------------------------------------
# open model

def _sinks(sink) -> list[int]:
    if isinstance(sink, int):
        return [sink]
    return sorted(set(int(z) for z in sink))


def _enumerate_open_single(g: Graph, A: set[int], a: int, z: int, cap: int):
    dom = sorted(A)
    choices = [[z] if x == z else [y for y in (x, *g.adj[x]) if y in A and y != a]
               for x in dom]
    image = list(range(g.n))
    used = [False] * g.n
    used[a] = True  # a has no preimage
    visited = 0

    def rec(i: int, h: int):
        nonlocal visited
        visited += 1
        if visited > cap:
            raise CapacityError(f"open enumeration exceeded {cap} search nodes")
        if i == len(dom):
            yield tuple(image), h
            return
        x = dom[i]
        if x == z:
            image[x] = z
            yield from rec(i + 1, h)
            return
        for y in choices[i]:
            if not used[y]:
                used[y] = True
                image[x] = y
                yield from rec(i + 1, h + (y != x))
                used[y] = False
        image[x] = x

    yield from rec(0, 0)


def enumerate_open(g: Graph, A: Iterable[int], a: int, sink,
                   cap: int = DEFAULT_ENUM_CAP) -> Iterator[tuple[tuple[int, ...], int, int]]:
    """Yield ``(image, energy, z)`` over ``S_A^{a->z}`` or over ``S_A^{a->l}`` for a sink set.

    For a set of sinks the union ``S_{A+z}^{a->z}`` over ``z`` in the set is
    enumerated sink by sink. ``a == z`` is rejected.
    """
    A = set(A)
    if a not in A:
        raise ValueError("source must lie in the domain")
    sinks = _sinks(sink)
    if a in sinks:
        raise ValueError("source and sink must differ")
    for z in sinks:
        dom = A | {z}
        for img, h in _enumerate_open_single(g, dom, a, z, cap):
            yield img, h, z


def open_histogram(g: Graph, A, a: int, sink, cap: int = DEFAULT_ENUM_CAP) -> dict[int, int]:
    hist: dict[int, int] = {}
    for _, h, _ in enumerate_open(g, A, a, sink, cap):
        hist[h] = hist.get(h, 0) + 1
    return hist


def partition_open(g: Graph, A, a: int, sink, alpha: float,
                   cap: int = DEFAULT_ENUM_CAP) -> PartitionFunction:
    """``Z^{a->z}(A)``, or ``sum_z Z^{a->z}(A + z)`` for a sink set."""
    return PartitionFunction.from_hist(open_histogram(g, A, a, sink, cap), alpha)


def open_polynomial_by_walks(g: Graph, A, a: int, sink) -> Poly:
    """Independent count: ``sum over SAWs gamma: a -> z of q^|gamma| Z(A + z minus gamma)``."""
    A = set(A)
    counter = CycleCounter(g)
    total: Poly = (0,)
    for z in _sinks(sink):
        if z == a:
            raise ValueError("source and sink must differ")
        dom = A | {z}
        dmask = to_mask(dom)
        for steps, wmask in self_avoiding_walks_between(g, a, z, dmask):
            total = poly_add(total, poly_shift(counter.poly(dmask & ~wmask), steps))
    return total


def self_avoiding_walks_between(g: Graph, a: int, z: int, mask: int) -> Iterator[tuple[int, int]]:
    """``(steps, vertex_mask)`` of every SAW from ``a`` to ``z`` inside ``mask``."""
    def rec(v: int, seen: int, k: int):
        if v == z:
            yield k, seen
            return
        for w in g.adj[v]:
            if (mask >> w) & 1 and not (seen >> w) & 1:
                yield from rec(w, seen | (1 << w), k + 1)

    if (mask >> a) & 1:
        yield from rec(a, 1 << a, 0)


def open_distribution(g: Graph, A, a: int, sink, alpha: float,
                      cap: int = DEFAULT_ENUM_CAP) -> tuple[list[tuple], list[int], list[float]]:
    """Exact open-model law as parallel lists ``(image, z)``, energies, probabilities."""
    support, energies = [], []
    for img, h, z in enumerate_open(g, A, a, sink, cap):
        support.append((img, z))
        energies.append(h)
    if not support:
        return [], [], []
    hist: dict[int, int] = {}
    for h in energies:
        hist[h] = hist.get(h, 0) + 1
    log_z = log_poly_value(hist_to_poly(hist), alpha)
    probs = [math.exp(-alpha * h - log_z) for h in energies]
    return support, energies, probs


# ---------------------------------------------------------------------------
# cycle length tails

@dataclass
class CycleTail:
    """Exact law of ``||gamma_z||`` stored as per-length energy histograms."""

    z: int
    n_vertices: int
    by_length: dict[int, dict[int, int]]
    alpha: float

    def pmf(self, alpha: float | None = None) -> dict[int, float]:
        alpha = self.alpha if alpha is None else alpha
        logs = {k: log_poly_value(hist_to_poly(h), alpha) for k, h in self.by_length.items()}
        m = max(logs.values())
        tot = sum(math.exp(v - m) for v in logs.values())
        return {k: math.exp(v - m) / tot for k, v in sorted(logs.items())}

    def tail(self, ell: int, alpha: float | None = None) -> float:
        """``P(||gamma_z|| > ell)``."""
        pmf = self.pmf(alpha)
        return min(1.0, sum(p for k, p in pmf.items() if k > ell))

    def __call__(self, ell: int) -> float:
        return self.tail(ell)

    def table(self, alpha: float | None = None) -> list[tuple[int, float]]:
        pmf = self.pmf(alpha)
        out = []
        for ell in range(self.n_vertices + 1):
            out.append((ell, min(1.0, sum(p for k, p in pmf.items() if k > ell))))
        return out

    def to_csv(self, alpha: float | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ell", "probability"])
        for ell, p in self.table(alpha):
            w.writerow([ell, repr(p)])
        return buf.getvalue()


def cycle_length(image: Sequence[int], z: int) -> int:
    """``||gamma_z||``: number of edges of the cycle through ``z`` (0 if fixed)."""
    k, y = 1, image[z]
    while y != z:
        k += 1
        y = image[y]
    return 0 if k == 1 else k


def cycle_tail(g: Graph, z: int, alpha: float, domain=None,
               cap: int = DEFAULT_ENUM_CAP) -> CycleTail:
    """Exact ``ell -> P_U(||gamma_z|| > ell)`` on the domain ``U``."""
    by_length: dict[int, dict[int, int]] = {}
    for img, h in enumerate_closed(g, domain, cap):
        k = cycle_length(img, z)
        d = by_length.setdefault(k, {})
        d[h] = d.get(h, 0) + 1
    n = g.n if domain is None else len(set(domain))
    return CycleTail(z, n, by_length, alpha)


# ---------------------------------------------------------------------------
# self-avoiding walk / polygon census

@dataclass
class SawCensus:
    """Rooted counts ``|SAW_n|`` and ``|SAP_n|`` for ``n = 0..N_max``."""

    origin: int
    saw: list[int]
    sap: list[int]
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.saw) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "saw_count", "sap_count"])
        for n, (a, b) in enumerate(zip(self.saw, self.sap)):
            w.writerow([n, a, b])
        return buf.getvalue()

    @classmethod
    def constant(cls, n_max: int, value: int = 1) -> "SawCensus":
        return cls(0, [1] + [value] * n_max, [1] + [value] * n_max)


def saw_census(g: Graph, origin: int, n_max: int, allowed: Iterable[int] | None = None,
               budget: int = 10**9, include_two_cycles: bool = True) -> SawCensus:
    """Backtracking count of walks and directed polygons rooted at ``origin``.

    ``SAP_n`` counts directed cycles of ``n`` edges through the origin, so
    ``SAP_2`` is the number of neighbours (one back-and-forth cycle each).
    Setting ``include_two_cycles=False`` drops them.
    """
    allow = None if allowed is None else set(allowed)
    saw = [0] * (n_max + 1)
    sap = [0] * (n_max + 1)
    saw[0] = sap[0] = 1
    if allow is not None and origin not in allow:
        raise ValueError("origin outside the allowed set")
    onbr = set(g.adj[origin]) if allow is None else set(g.adj[origin]) & allow
    seen = [False] * g.n
    seen[origin] = True
    work = 0
    adj = g.adj

    def rec(v: int, k: int):
        nonlocal work
        work += 1
        if work > budget:
            raise CapacityError(f"census exceeded DFS budget {budget}")
        saw[k] += 1
        if k + 1 <= n_max and k >= 2 and v in onbr:
            sap[k + 1] += 1
        if k == n_max:
            return
        for w in adj[v]:
            if not seen[w] and (allow is None or w in allow):
                seen[w] = True
                rec(w, k + 1)
                seen[w] = False

    for w in adj[origin]:
        if allow is None or w in allow:
            seen[w] = True
            rec(w, 1)
            seen[w] = False
    if n_max >= 2 and include_two_cycles:
        sap[2] = len(onbr)
    return SawCensus(origin, saw, sap, {"n_max": n_max})


def census_max_over(g: Graph, origins: Iterable[int], n_max: int, **kw) -> SawCensus:
    """Pointwise maximum of rooted censuses over several origins."""
    out = None
    for o in origins:
        c = saw_census(g, o, n_max, **kw)
        if out is None:
            out = c
        else:
            out = SawCensus(out.origin, [max(a, b) for a, b in zip(out.saw, c.saw)],
                            [max(a, b) for a, b in zip(out.sap, c.sap)], out.meta)
    if out is None:
        raise ValueError("no origins given")
    return out


@dataclass
class ConnectiveEstimate:
    saw_roots: list[float]
    sap_roots: list[float]


def connective_estimate(census: SawCensus) -> ConnectiveEstimate:
    """``|SAW_n|^(1/n)`` and ``|SAP_n|^(1/n)`` for ``n >= 1``; diagnostics only."""
    if not census.saw:
        raise ValueError("empty census")
    saw = [c ** (1.0 / n) if c > 0 else 0.0 for n, c in enumerate(census.saw) if n >= 1]
    sap = [c ** (1.0 / n) if c > 0 else 0.0 for n, c in enumerate(census.sap) if n >= 1]
    return ConnectiveEstimate(saw, sap)
