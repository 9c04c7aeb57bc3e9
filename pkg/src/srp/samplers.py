"""Metropolis chains, the recursive sampling procedure and the symmetric invariant-set sampler.

Closed-model move sets:

``"edge"``
    ``pi o (x y)`` for a uniform edge ``{x, y}``. Not ergodic in general: on
    the 2x2 grid the two oriented 4-cycles have no valid move.
``"extended"`` (default)
    2-changes over pairs at graph distance 1 or 2, reversal of the cycle
    through a uniform vertex, and a toggle move that either deletes the cycle
    through a uniform vertex or grows a new cycle from it by a self-avoiding
    walk over fixed points. Toggles carry a Hastings factor computed from the
    growth probabilities. Since every state can be emptied cycle by cycle,
    the chain is irreducible on every graph.

:func:`verify_ergodicity` and :func:`detailed_balance_residual` certify both
claims exhaustively on small graphs through :func:`move_kernel`, an exact
Python mirror of the numba kernel.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from srp import _kernels as K
from srp.errors import CapacityError, InvariantViolation, StrategyContractError
from srp.exact import DEFAULT_ENUM_CAP, closed_distribution, enumerate_closed, enumerate_open
from srp.lattice import Graph, SymmetryGroup
from srp.perm import GraphPermutation, OpenCycleConfig, orbit_of_image

MOVE_SETS = ("edge", "extended")
DEFAULT_REV_PROB = 0.05
DEFAULT_TOGGLE_PROB = 0.15
DEFAULT_END_PROB = 0.1
CHUNK = 1 << 20


# ---------------------------------------------------------------------------
# randomness

@dataclass(frozen=True)
class RngStream:
    """Seeded, stream-indexed source of numpy generators.

    ``generator()`` always returns a fresh generator positioned at the start
    of the stream, so two calls give identical draws.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        """Independent sub-stream ``k`` (used e.g. to split strategy and permutation draws)."""
        return RngStream(self.seed, (self.stream << 16) + k + 1)


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator()


# ---------------------------------------------------------------------------
# move sets and the exact proposal kernel

def move_pairs(g: Graph, move_set: str = "extended", domain: Iterable[int] | None = None) -> np.ndarray:
    """Pairs ``x < y`` that a 2-change may act on, in canonical order."""
    if move_set not in MOVE_SETS:
        raise ValueError(f"unknown move set {move_set!r}")
    dom = set(range(g.n)) if domain is None else set(domain)
    pairs = set()
    for x in sorted(dom):
        for y in g.adj[x]:
            if y in dom and x < y:
                pairs.add((x, y))
        if move_set == "extended":
            for y in g.adj[x]:
                for w in g.adj[y]:
                    if w != x and w in dom and x < w:
                        pairs.add((x, w))
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class MoveProbs:
    """Probabilities of the end, toggle and reversal moves; the rest are 2-changes."""

    end: float = 0.0
    toggle: float = 0.0
    rev: float = 0.0

    @classmethod
    def for_closed(cls, move_set: str) -> "MoveProbs":
        if move_set == "edge":
            return cls()
        return cls(0.0, DEFAULT_TOGGLE_PROB, DEFAULT_REV_PROB)

    @classmethod
    def for_open(cls, many_sinks: bool) -> "MoveProbs":
        return cls(DEFAULT_END_PROB if many_sinks else 0.0, DEFAULT_TOGGLE_PROB, DEFAULT_REV_PROB)


def _is_nn(g: Graph, x: int, y: int) -> bool:
    return x == y or g.has_edge(x, y)


def _energy(image: Sequence[int]) -> int:
    return sum(1 for x, y in enumerate(image) if x != y)


def _growth_prob(g: Graph, cyc: Sequence[int], start: int, avail) -> float:
    m = len(cyc)
    x = cyc[start]
    seen = {x}
    p = 1.0
    for j in range(m):
        v = cyc[(start + j) % m]
        opts = sum(1 for w in g.adj[v] if w not in seen and avail(w))
        if j >= 1 and g.has_edge(v, x):
            opts += 1
        if opts == 0:
            return 0.0
        p /= opts
        if j + 1 < m:
            seen.add(cyc[(start + j + 1) % m])
    return p


def _growth_outcomes(g: Graph, u: int, avail) -> list[tuple[tuple[int, ...] | None, float]]:
    """All results of the growth walk from ``u``: ``(cycle or None, probability)``."""
    out = []

    def rec(path, seen, p):
        v = path[-1]
        opts = [w for w in g.adj[v] if w not in seen and avail(w)]
        close = len(path) >= 2 and g.has_edge(v, u)
        tot = len(opts) + close
        if tot == 0:
            out.append((None, p))
            return
        for w in opts:
            rec(path + [w], seen | {w}, p / tot)
        if close:
            out.append((tuple(path), p / tot))

    rec([u], {u}, 1.0)
    return out


def _with_cycle(image: tuple, cyc: Sequence[int]) -> tuple:
    img = list(image)
    m = len(cyc)
    for i in range(m):
        img[cyc[i]] = cyc[(i + 1) % m]
    return tuple(img)


def _reversed_cycle(image: tuple, u: int) -> tuple:
    img = list(image)
    v = u
    while True:
        w = image[v]
        img[w] = v
        v = w
        if v == u:
            break
    return tuple(img)


def _cycle_or_walk(image: tuple, u: int, z: int) -> list[int] | None:
    """Cycle through ``u`` in orbit order, or ``None`` if ``u`` lies on the walk."""
    out, v = [], u
    while True:
        if v == z:
            return None
        out.append(v)
        v = image[v]
        if v == u:
            return out


def move_kernel(g: Graph, alpha: float, image: tuple, z: int, a: int, domain: frozenset,
                sinks: frozenset, pairs, probs: MoveProbs) -> dict[tuple, float]:
    """Exact transition probabilities ``k((image, z) -> .)`` of the chain.

    ``z = -1`` selects the closed model. This mirrors the numba kernel move
    for move and is used for detailed-balance and ergodicity certificates.
    """
    cur = (image, z)
    n = g.n
    h0 = _energy(image)
    out: dict[tuple, float] = {}
    stay = 0.0

    def add(target, p, ratio):
        nonlocal stay
        acc = min(1.0, ratio)
        if target == cur:
            stay += p
            return
        out[target] = out.get(target, 0.0) + p * acc
        stay += p * (1 - acc)

    def avail_in(img):
        return lambda w: w in domain and img[w] == w and w != z

    if probs.end > 0:
        nb = g.adj[z]
        if not nb:
            stay += probs.end
        for w in nb:
            p = probs.end / len(nb)
            if w not in domain or w not in sinks or w == a:
                stay += p
            elif image[w] == w:
                img = list(image)
                img[z] = w
                add((tuple(img), w), p, math.exp(-alpha) * len(nb) / len(g.adj[w]))
            elif image[w] == z:
                img = list(image)
                img[w] = w
                img[z] = z
                add((tuple(img), w), p, math.exp(alpha) * len(nb) / len(g.adj[w]))
            else:
                stay += p
    if probs.toggle > 0:
        for u in range(n):
            p = probs.toggle / n
            if u not in domain or u == z:
                stay += p
                continue
            if image[u] != u:
                cyc = _cycle_or_walk(image, u, z)
                if cyc is None:
                    stay += p
                    continue
                img = list(image)
                for v in cyc:
                    img[v] = v
                img = tuple(img)
                av = avail_in(img)
                s = sum(_growth_prob(g, cyc, i, av) for i in range(len(cyc)))
                add((img, z), p, math.exp(alpha * len(cyc)) * s / len(cyc))
            else:
                av = avail_in(image)
                for cyc, q in _growth_outcomes(g, u, av):
                    if cyc is None:
                        stay += p * q
                        continue
                    s = sum(_growth_prob(g, cyc, i, av) for i in range(len(cyc)))
                    add((_with_cycle(image, cyc), z), p * q,
                        math.exp(-alpha * len(cyc)) * len(cyc) / s)
    if probs.rev > 0:
        for u in range(n):
            p = probs.rev / n
            if u not in domain or image[u] == u or image[image[u]] == u:
                stay += p
                continue
            if _cycle_or_walk(image, u, z) is None:
                stay += p
                continue
            add((_reversed_cycle(image, u), z), p, 1.0)
    rest = 1.0 - probs.end - probs.toggle - probs.rev
    if len(pairs) == 0:
        stay += rest
    else:
        w = rest / len(pairs)
        for x, y in pairs:
            x, y = int(x), int(y)
            if x == z or y == z or not (_is_nn(g, x, image[y]) and _is_nn(g, y, image[x])):
                stay += w
                continue
            img = list(image)
            img[x], img[y] = image[y], image[x]
            add((tuple(img), z), w, math.exp(-alpha * (_energy(img) - h0)))
    out[cur] = out.get(cur, 0.0) + stay
    return out


def closed_kernel(g: Graph, alpha: float, image: tuple, move_set: str = "extended",
                  pairs=None, probs: MoveProbs | None = None) -> dict[tuple, float]:
    """Closed-model transition probabilities from ``image`` (keys are images)."""
    if pairs is None:
        pairs = move_pairs(g, move_set)
    probs = MoveProbs.for_closed(move_set) if probs is None else probs
    dom = frozenset(range(g.n))
    row = move_kernel(g, alpha, tuple(image), -1, -1, dom, frozenset(), pairs, probs)
    return {s: p for (s, _), p in row.items()}


@dataclass
class ErgodicityCertificate:
    connected: bool
    n_states: int
    move_set: str
    reached: int
    counterexample: tuple | None = None
    parents: dict = field(default_factory=dict, repr=False)

    def __bool__(self) -> bool:
        return self.connected

    def path_to(self, state) -> list:
        """Proposal path from the root state to ``state`` (the reachability certificate)."""
        path = [state]
        while self.parents.get(path[-1]) is not None:
            path.append(self.parents[path[-1]])
        return path[::-1]


def _strongly_connected(states: list, neighbours: Callable) -> tuple[dict, tuple | None]:
    """BFS forward from the first state, then backward; returns parents and a counterexample."""
    root = states[0]
    fwd = {root: None}
    queue = deque([root])
    rev: dict = {}
    while queue:
        s = queue.popleft()
        for t in neighbours(s):
            rev.setdefault(t, []).append(s)
            if t not in fwd:
                fwd[t] = s
                queue.append(t)
    for s in states:
        if s not in fwd:
            return fwd, (root, s)
    back = {root}
    queue = deque([root])
    while queue:
        t = queue.popleft()
        for s in rev.get(t, ()):
            if s not in back:
                back.add(s)
                queue.append(s)
    for s in states:
        if s not in back:
            return fwd, (s, root)
    return fwd, None


def verify_ergodicity(g: Graph, alpha: float = 1.0, move_set: str = "extended",
                      cap: int = 200_000) -> ErgodicityCertificate:
    """Strong connectivity of the chain's transition graph over all of ``S_V``.

    At finite ``alpha`` every valid proposal has positive acceptance, so the
    transition graph is the proposal graph.
    """
    if not math.isfinite(alpha):
        raise ValueError("alpha must be finite")
    states = [img for img, _ in enumerate_closed(g, cap=cap * (g.n + 1))]
    if len(states) > cap:
        raise CapacityError(f"{len(states)} states exceed the cap {cap}")
    pairs = move_pairs(g, move_set)

    def nbrs(s):
        return [t for t, p in closed_kernel(g, alpha, s, move_set, pairs).items() if t != s and p > 0]

    parents, ce = _strongly_connected(states, nbrs)
    return ErgodicityCertificate(ce is None, len(states), move_set, len(parents), ce, parents)


def detailed_balance_residual(g: Graph, alpha: float, move_set: str = "extended") -> float:
    """``max |P(s) k(s,t) - P(t) k(t,s)|`` over all state pairs, by exhaustive scan."""
    P = closed_distribution(g, alpha).as_dict()
    pairs = move_pairs(g, move_set)
    kern = {s: closed_kernel(g, alpha, s, move_set, pairs) for s in P}
    worst = 0.0
    for s, row in kern.items():
        for t, k in row.items():
            if t != s:
                worst = max(worst, abs(P[s] * k - P[t] * kern[t].get(s, 0.0)))
    return worst


# ---------------------------------------------------------------------------
# chain drivers

@dataclass
class ChainResult:
    """Per-sample records of a chain run."""

    energies: np.ndarray
    codes: np.ndarray | None
    zlen: np.ndarray | None
    sinks: np.ndarray | None
    images: np.ndarray | None
    accepted: int
    proposals: int

    @property
    def acceptance(self) -> float:
        return self.accepted / max(1, self.proposals)


def decode_state(code: int, n: int) -> tuple:
    out = []
    for _ in range(n):
        out.append(code % n)
        code //= n
    return tuple(out)


def encode_state(image: Sequence[int]) -> int:
    n = len(image)
    c = 0
    for x in range(n - 1, -1, -1):
        c = c * n + int(image[x])
    return c


class _Chain:
    def __init__(self, g: Graph, alpha: float, rng, image, domain, a: int, z: int,
                 sinks, pairs, probs: MoveProbs):
        self.g = g
        self.alpha = float(alpha)
        self.gen = _gen(rng)
        self.pairs = pairs
        self.probs = probs
        self.ptr, self.idx = K.csr(g.adj)
        self.image = np.array(image, dtype=np.int64)
        self.pre = np.arange(g.n, dtype=np.int64)
        for x in range(g.n):
            if image[x] != x:
                self.pre[image[x]] = x
        self.state = np.array([a, z], dtype=np.int64)
        self.in_dom = np.zeros(g.n, dtype=np.bool_)
        self.in_dom[sorted(domain)] = True
        self.is_sink = np.zeros(g.n, dtype=np.bool_)
        if sinks:
            self.is_sink[sorted(sinks)] = True
        self.buf = np.empty(max(1, g.n), dtype=np.int64)
        self.stamp = np.zeros(max(1, g.n), dtype=np.int64)
        self.tag = 0
        self.accepted = 0
        self.proposals = 0

    def _reseed(self):
        K.reseed(int(self.gen.integers(0, 2**32 - 1)))

    def step(self, proposals: int) -> None:
        if proposals <= 0:
            return
        self._reseed()
        p = self.probs
        acc, self.tag = K.run_steps(self.image, self.pre, self.state, self.pairs, self.ptr,
                                    self.idx, self.in_dom, self.is_sink, self.alpha, p.end,
                                    p.toggle, p.rev, proposals, self.buf, self.stamp, self.tag)
        self.accepted += acc
        self.proposals += proposals

    def _run(self, samples, sweeps_per_sample, burn_in_sweeps, z_record, codes, images):
        n = self.g.n
        self.step(burn_in_sweeps * n)
        want_code = (n <= 15) if codes is None else bool(codes)
        steps = max(1, sweeps_per_sample * n)
        energies = np.empty(samples, dtype=np.int64)
        sinks = np.empty(samples, dtype=np.int64)
        code = np.zeros(samples if want_code else 1, dtype=np.int64)
        zlen = np.zeros(samples if z_record >= 0 else 1, dtype=np.int64)
        imgs = np.zeros((samples, n) if images else (1, n), dtype=np.int64)
        acc0, prop0 = self.accepted, self.proposals
        per_call = max(1, CHUNK // steps)
        done = 0
        p = self.probs
        while done < samples:
            s = min(per_call, samples - done)
            sl = slice(done, done + s)
            self._reseed()
            acc, self.tag = K.run_record(
                self.image, self.pre, self.state, self.pairs, self.ptr, self.idx, self.in_dom,
                self.is_sink, self.alpha, p.end, p.toggle, p.rev, steps, self.buf, self.stamp,
                self.tag, z_record, want_code, images,
                code[sl] if want_code else code, energies[sl], sinks[sl],
                zlen[sl] if z_record >= 0 else zlen, imgs[sl] if images else imgs)
            self.accepted += acc
            self.proposals += s * steps
            done += s
        return ChainResult(energies, code if want_code else None,
                           zlen if z_record >= 0 else None, sinks, imgs if images else None,
                           self.accepted - acc0, self.proposals - prop0)


class ClosedChain(_Chain):
    """Metropolis chain for ``P_V``; one sweep is ``|V|`` proposals."""

    def __init__(self, g: Graph, alpha: float, rng, move_set: str = "extended",
                 start: Sequence[int] | None = None, probs: MoveProbs | None = None):
        img = list(range(g.n)) if start is None else [int(v) for v in start]
        if start is not None:
            GraphPermutation(g, img)
        self.move_set = move_set
        probs = MoveProbs.for_closed(move_set) if probs is None else probs
        super().__init__(g, alpha, rng, img, range(g.n), -1, -1, (), move_pairs(g, move_set), probs)

    @property
    def permutation(self) -> GraphPermutation:
        return GraphPermutation(self.g, self.image.tolist(), check=False)

    def run(self, samples: int, sweeps_per_sample: int = 1, burn_in_sweeps: int = 100,
            z: int = -1, codes: bool | None = None, images: bool = False) -> ChainResult:
        return self._run(samples, sweeps_per_sample, burn_in_sweeps, z, codes, images)


def metropolis_step(p: GraphPermutation, alpha: float, rng, move_set: str = "edge") -> GraphPermutation:
    """One proposal of the closed chain started at ``p``; returns the new state."""
    chain = ClosedChain(p.graph, alpha, rng, move_set=move_set, start=p.image)
    chain.step(1)
    return chain.permutation


def empirical_law(codes: np.ndarray, n: int) -> dict[tuple, float]:
    vals, counts = np.unique(codes, return_counts=True)
    tot = counts.sum()
    return {decode_state(int(v), n): c / tot for v, c in zip(vals, counts)}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# open chain

def _sink_list(sink) -> list[int]:
    if isinstance(sink, (int, np.integer)):
        return [int(sink)]
    return sorted(int(z) for z in sink)


def _open_start(g: Graph, domain: set, a: int, sinks: list[int], path: Sequence[int] | None):
    """Initial open configuration: a shortest walk from ``a`` to the nearest sink, identity elsewhere."""
    if path is None:
        par = {a: None}
        q = deque([a])
        target = None
        sinkset = set(sinks)
        while q:
            v = q.popleft()
            if v in sinkset:
                target = v
                break
            for w in g.adj[v]:
                if w in domain and w not in par:
                    par[w] = v
                    q.append(w)
        if target is None:
            raise ValueError("sink not reachable from the source inside the domain")
        path = [target]
        while par[path[-1]] is not None:
            path.append(par[path[-1]])
        path = path[::-1]
    img = list(range(g.n))
    for u, v in zip(path, path[1:]):
        img[u] = v
    return img, path[-1]


class OpenChain(_Chain):
    """Metropolis-Hastings chain for the open-cycle measure on ``S_A^{a->z}`` or ``S_A^{a->l}``.

    Moves: 2-changes away from the sink, cycle toggles and reversals in the
    background, and end moves that extend or retract the walk inside the sink
    set (with the Hastings factor ``deg(z)/deg(z')``).
    """

    def __init__(self, g: Graph, domain: Iterable[int], a: int, sink, alpha: float, rng,
                 probs: MoveProbs | None = None, start_path: Sequence[int] | None = None):
        sinks = _sink_list(sink)
        if a in sinks:
            raise ValueError("source and sink must differ")
        dom = frozenset(domain) | frozenset(sinks)
        self.domain = dom
        self.sinks = frozenset(sinks)
        self.a = a
        img, z = _open_start(g, set(dom), a, sinks, start_path)
        OpenCycleConfig(g, img, dom, a, z)
        probs = MoveProbs.for_open(len(sinks) > 1) if probs is None else probs
        super().__init__(g, alpha, rng, img, dom, a, z, sinks, move_pairs(g, "extended", dom), probs)

    @property
    def sink(self) -> int:
        return int(self.state[1])

    def config(self) -> OpenCycleConfig:
        return OpenCycleConfig(self.g, self.image.tolist(), self.domain, self.a, self.sink)

    def run(self, samples: int, sweeps_per_sample: int = 1, burn_in_sweeps: int = 100,
            codes: bool | None = None, images: bool = False) -> ChainResult:
        return self._run(samples, sweeps_per_sample, burn_in_sweeps, -1, codes, images)


def _open_setup(g, domain, a, sink, probs):
    sinks = _sink_list(sink)
    dom = frozenset(domain) | frozenset(sinks)
    probs = MoveProbs.for_open(len(sinks) > 1) if probs is None else probs
    return sinks, dom, probs, move_pairs(g, "extended", dom)


def open_law(g: Graph, domain, a: int, sink, alpha: float) -> dict[tuple, float]:
    """Exact open-model law keyed by ``(image, z)``."""
    sinks = _sink_list(sink)
    dom = frozenset(domain) | frozenset(sinks)
    w = {(img, z): -alpha * h for img, h, z in enumerate_open(g, dom, a, sinks)}
    if not w:
        return {}
    m = max(w.values())
    tot = sum(math.exp(v - m) for v in w.values())
    return {k: math.exp(v - m) / tot for k, v in w.items()}


def verify_open_ergodicity(g: Graph, domain, a: int, sink, alpha: float = 1.0,
                           probs: MoveProbs | None = None, cap: int = 200_000) -> ErgodicityCertificate:
    """State-graph connectivity over all open configurations for the open chain."""
    sinks, dom, probs, pairs = _open_setup(g, domain, a, sink, probs)
    states = [(img, z) for img, _, z in enumerate_open(g, dom, a, sinks, cap=cap * (g.n + 1))]
    if not states:
        raise ValueError("no open configurations: sink unreachable")
    if len(states) > cap:
        raise CapacityError(f"{len(states)} states exceed the cap {cap}")
    sset = frozenset(sinks)

    def nbrs(s):
        row = move_kernel(g, alpha, s[0], s[1], a, dom, sset, pairs, probs)
        return [t for t, p in row.items() if t != s and p > 0]

    parents, ce = _strongly_connected(states, nbrs)
    return ErgodicityCertificate(ce is None, len(states), "open", len(parents), ce, parents)


def open_detailed_balance_residual(g: Graph, domain, a: int, sink, alpha: float,
                                   probs: MoveProbs | None = None) -> float:
    sinks, dom, probs, pairs = _open_setup(g, domain, a, sink, probs)
    P = open_law(g, dom, a, sinks, alpha)
    sset = frozenset(sinks)
    kern = {s: move_kernel(g, alpha, s[0], s[1], a, dom, sset, pairs, probs) for s in P}
    worst = 0.0
    for s, row in kern.items():
        for t, k in row.items():
            if t != s:
                worst = max(worst, abs(P[s] * k - P[t] * kern[t].get(s, 0.0)))
    return worst


_CERTIFIED: list = []


def certify_open_chain(g: Graph, domain, a: int, sink) -> ErgodicityCertificate:
    """Run the open-chain ergodicity check and remember a success for :func:`sample_open`."""
    cert = verify_open_ergodicity(g, domain, a, sink)
    if cert.connected:
        _CERTIFIED.append(cert)
    return cert


# exact enumeration recurses once per domain vertex
EXACT_DOMAIN_LIMIT = 48


def sample_open(g: Graph, domain, a: int, sink, alpha: float, rng, samples: int = 1,
                exact_cap: int = 50_000, sweeps_per_sample: int = 10, burn_in_sweeps: int = 200,
                unsafe: bool = False) -> list[OpenCycleConfig]:
    """Draw open-cycle configurations.

    Instances with at most ``exact_cap`` enumeration nodes are sampled exactly.
    Larger ones use :class:`OpenChain`, which is refused unless the move set
    has been certified on a small instance (:func:`certify_open_chain`) or
    ``unsafe`` is set.
    """
    sinks = _sink_list(sink)
    dom = frozenset(domain) | frozenset(sinks)
    gen = _gen(rng)
    states = None
    if len(dom) <= EXACT_DOMAIN_LIMIT:
        try:
            states = list(enumerate_open(g, dom, a, sinks, cap=exact_cap))
        except CapacityError:
            states = None
    if states is not None:
        if not states:
            raise ValueError("sink unreachable from the source")
        hs = np.array([h for _, h, _ in states], dtype=float)
        w = np.exp(-alpha * (hs - hs.min()))
        picks = gen.choice(len(states), size=samples, p=w / w.sum())
        return [OpenCycleConfig(g, states[i][0], dom, a, states[i][2]) for i in picks]
    if not unsafe and not _CERTIFIED:
        raise InvariantViolation("open chain not certified ergodic; certify a small instance or pass unsafe=True")
    chain = OpenChain(g, dom, a, sinks, alpha, gen)
    res = chain.run(samples, sweeps_per_sample, burn_in_sweeps, codes=False, images=True)
    return [OpenCycleConfig(g, res.images[i].tolist(), dom, a, int(res.sinks[i]), check=False)
            for i in range(samples)]


# ---------------------------------------------------------------------------
# sampling strategies and the recursive procedure

Chooser = Callable[[frozenset, tuple, "np.random.Generator | None"], Iterable[int]]


@dataclass
class SamplingStrategy:
    """Keep-set chooser ``(B, history, rng) -> K`` plus a name.

    ``history`` is the tuple of earlier rounds ``(B_i, K_i, D_i)``; the chooser
    never sees the sub-permutations themselves. ``deterministic`` strategies
    ignore ``rng`` and can be used by :func:`assembled_law_exact`.
    """

    name: str
    chooser: Chooser
    deterministic: bool = True

    def choose(self, B: frozenset, history: tuple, rng=None) -> frozenset:
        K = frozenset(self.chooser(B, history, rng))
        if B and not K:
            raise StrategyContractError(f"{self.name}: empty keep set for nonempty B")
        if not K <= B:
            raise StrategyContractError(f"{self.name}: keep set not inside B")
        return K


def whole_set_strategy() -> SamplingStrategy:
    """``K_B = B``: one round, the assembled permutation is ``sigma_V``."""
    return SamplingStrategy("whole", lambda B, h, r: B)


def first_vertex_strategy(x0: int | None = None) -> SamplingStrategy:
    """``K_V = {x0}`` (default: the smallest vertex), then ``K_B = B``."""
    def choose(B, hist, rng):
        if not hist:
            return {min(B) if x0 is None else x0}
        return B
    return SamplingStrategy(f"first-vertex({x0})", choose)


def min_vertex_strategy() -> SamplingStrategy:
    """``K_B = {min B}`` every round: the procedure peels one cycle at a time."""
    return SamplingStrategy("min-vertex", lambda B, h, r: {min(B)})


def random_vertex_strategy() -> SamplingStrategy:
    """``K_B = {x}`` for ``x`` uniform in ``B`` drawn from the strategy's own stream."""
    def choose(B, hist, rng):
        items = sorted(B)
        return {items[int(rng.integers(len(items)))]}
    return SamplingStrategy("random-vertex", choose, deterministic=False)


def phi_compatible_strategy(phi: SymmetryGroup, A: Iterable[int]) -> SamplingStrategy:
    """``K_V = Phi(A)``; afterwards ``K_B = B cap Phi(B^c)`` or ``B`` if that is empty."""
    A = frozenset(A)
    V = frozenset(range(phi.graph.n))
    phiA = phi.orbit_of_set(A)

    def choose(B, hist, rng):
        if not hist:
            return phiA & B if B == V else B
        K = B & phi.orbit_of_set(V - B)
        return K if K else B
    return SamplingStrategy("phi-compatible", choose)


@dataclass
class SamplingRound:
    B: frozenset
    K: frozenset
    D: frozenset
    pi: dict  # restriction of pi_i to D_i


@dataclass
class SamplingTrace:
    rounds: list[SamplingRound]
    assembled: GraphPermutation

    def check(self) -> None:
        V = frozenset(range(self.assembled.graph.n))
        seen: set = set()
        B = V
        for r in self.rounds:
            if r.B != B:
                raise InvariantViolation("B_{i+1} != B_i minus D_i")
            if seen & r.D:
                raise InvariantViolation("rounds overlap")
            if frozenset(r.pi[x] for x in r.D) != r.D:
                raise InvariantViolation("D_i not invariant under pi_i")
            if not r.K <= r.D:
                raise InvariantViolation("K_i not inside D_i")
            for x in r.D:
                if self.assembled.image[x] != r.pi[x]:
                    raise InvariantViolation("assembled permutation disagrees with pi_i")
            seen |= r.D
            B = B - r.D
        if seen != V:
            raise InvariantViolation("rounds do not cover V")


class ExactSubsampler:
    """Draws ``sigma_B ~ P_B`` exactly by enumeration, caching each law."""

    def __init__(self, g: Graph, alpha: float, cap: int = DEFAULT_ENUM_CAP):
        self.g, self.alpha, self.cap = g, alpha, cap
        self._cache: dict = {}

    def law(self, B: frozenset):
        if B not in self._cache:
            d = closed_distribution(self.g, self.alpha, B, self.cap)
            self._cache[B] = (d.support, np.array(d.probabilities))
        return self._cache[B]

    def __call__(self, B: frozenset, gen) -> tuple:
        support, p = self.law(B)
        return support[int(gen.choice(len(support), p=p))]


class MCMCSubsampler:
    """Draws ``sigma_B`` from a fresh chain on ``B`` (approximate)."""

    def __init__(self, g: Graph, alpha: float, burn_in_sweeps: int = 200, move_set: str = "extended"):
        self.g, self.alpha, self.burn, self.move_set = g, alpha, burn_in_sweeps, move_set

    def __call__(self, B: frozenset, gen) -> tuple:
        sub, old = self.g.induced(B)
        chain = ClosedChain(sub, self.alpha, gen, self.move_set)
        chain.step(self.burn * max(1, sub.n))
        img = list(range(self.g.n))
        for i, v in enumerate(old):
            img[v] = old[int(chain.image[i])]
        return tuple(img)


def run_sampling_procedure(g: Graph, strat: SamplingStrategy, alpha: float, rng,
                           subsampler="exact") -> SamplingTrace:
    """Recursive sampling: ``pi_i = sigma_{B_i}``, ``D_i = Or_{pi_i}(K_{B_i})``, ``B_{i+1} = B_i - D_i``."""
    rs = rng if isinstance(rng, RngStream) else RngStream(int(rng) if not isinstance(rng, np.random.Generator) else 0)
    strat_gen = rs.child(0).generator()
    perm_gen = rs.child(1).generator()
    if subsampler == "exact":
        sub = ExactSubsampler(g, alpha)
    elif subsampler == "mcmc":
        sub = MCMCSubsampler(g, alpha)
    else:
        sub = subsampler
    B = frozenset(range(g.n))
    history: tuple = ()
    rounds = []
    image = list(range(g.n))
    while B:
        Kset = strat.choose(B, history, strat_gen)
        sigma = sub(B, perm_gen)
        D = orbit_of_image(sigma, Kset)
        for x in D:
            image[x] = sigma[x]
        rounds.append(SamplingRound(B, Kset, D, {x: sigma[x] for x in D}))
        history = history + ((B, Kset, D),)
        B = B - D
    trace = SamplingTrace(rounds, GraphPermutation(g, image))
    trace.check()
    return trace


def assembled_law_exact(g: Graph, strat: SamplingStrategy, alpha: float,
                        cap: int = DEFAULT_ENUM_CAP) -> dict[tuple, float]:
    """Exact law of the assembled permutation, by recursion over ``(B, history)``.

    Each round groups the sub-permutations ``sigma_B`` by their restriction to
    ``D = Or(K)`` and recurses on ``B - D``.
    """
    if not strat.deterministic:
        raise StrategyContractError("exact law needs a deterministic chooser")
    laws: dict = {}

    def law_of(B):
        if B not in laws:
            laws[B] = closed_distribution(g, alpha, B, cap)
        return laws[B]

    def rec(B: frozenset, history: tuple) -> dict[tuple, float]:
        if not B:
            return {(): 1.0}
        Kset = strat.choose(B, history, None)
        d = law_of(B)
        groups: dict = {}
        for img, p in zip(d.support, d.probabilities):
            D = orbit_of_image(img, Kset)
            key = (D, tuple(sorted((x, img[x]) for x in D)))
            groups[key] = groups.get(key, 0.0) + p
        out: dict = {}
        for (D, part), p in groups.items():
            for tail, q in rec(B - D, history + ((B, Kset, D),)).items():
                k = tuple(sorted(part + tail))
                out[k] = out.get(k, 0.0) + p * q
        return out

    out = {}
    for assignment, p in rec(frozenset(range(g.n)), ()).items():
        img = [0] * g.n
        for x, y in assignment:
            img[x] = y
        out[tuple(img)] = out.get(tuple(img), 0.0) + p
    return out


def sample_phi_compatible_set(g: Graph, phi: SymmetryGroup, A: Iterable[int], alpha: float,
                              rng, subsampler="exact") -> tuple[frozenset, SamplingTrace]:
    """Sample ``A_hat = B_N^c`` where ``N`` is the first round ``n >= 2`` with ``K_{B_n} = B_n``.

    Counting from the second round keeps ``A_hat`` a superset of ``Phi(A)`` even
    when ``Phi(A) = V`` makes the first keep set the whole of ``B_1``.
    """
    A = frozenset(A)
    if not A:
        raise ValueError("A must be nonempty")
    strat = phi_compatible_strategy(phi, A)
    trace = run_sampling_procedure(g, strat, alpha, rng, subsampler)
    V = frozenset(range(g.n))
    a_hat = V
    for i, r in enumerate(trace.rounds):
        if i >= 1 and r.K == r.B:
            a_hat = V - r.B
            break
    return a_hat, trace


def phi_round_bound_ok(trace: SamplingTrace, phi: SymmetryGroup) -> bool:
    """``|K_{i+1}| <= (|Phi| - 1) |D_i - K_i|`` for every round before the stopping round."""
    m = len(phi) - 1
    rounds = trace.rounds
    for i in range(len(rounds) - 1):
        nxt = rounds[i + 1]
        if nxt.K == nxt.B:
            break
        if len(nxt.K) > m * len(rounds[i].D - rounds[i].K):
            return False
    return True
