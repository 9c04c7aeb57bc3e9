"""Finite graphs, cylinder lattices, distances and symmetry groups.

Vertices are dense integers ``0..n-1``. Cylinder vertices are ordered
lexicographically by ``(x1, xhat)`` so that every enumeration elsewhere in the
package visits them in one canonical order.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from srp.errors import CapacityError, InvariantViolation

DEFAULT_VERTEX_CAP = 2**20
INF = math.inf


@dataclass(frozen=True)
class Graph:
    """Finite simple undirected graph with sorted adjacency lists."""

    n: int
    adj: tuple[tuple[int, ...], ...]
    coords: tuple[tuple[int, ...], ...] | None = None
    _nbrsets: tuple[frozenset, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.adj) != self.n:
            raise InvariantViolation("adjacency length does not match vertex count")
        for x, nb in enumerate(self.adj):
            if list(nb) != sorted(set(nb)):
                raise InvariantViolation(f"neighbor list of {x} not sorted/unique")
            if x in nb:
                raise InvariantViolation(f"self-loop at {x}")
            for y in nb:
                if not 0 <= y < self.n or x not in self.adj[y]:
                    raise InvariantViolation(f"asymmetric edge {x}-{y}")
        if self.coords is not None and len(self.coords) != self.n:
            raise InvariantViolation("coords length does not match vertex count")
        object.__setattr__(self, "_nbrsets", tuple(frozenset(nb) for nb in self.adj))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], coords=None) -> "Graph":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise InvariantViolation(f"self-loop at {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        adj = tuple(tuple(sorted(s)) for s in nbrs)
        if coords is not None:
            coords = tuple(tuple(int(c) for c in xy) for xy in coords)
        return cls(n, adj, coords)

    def neighbors(self, x: int) -> tuple[int, ...]:
        return self.adj[x]

    def has_edge(self, x: int, y: int) -> bool:
        return y in self._nbrsets[x]

    def edges(self) -> list[tuple[int, int]]:
        return [(x, y) for x in range(self.n) for y in self.adj[x] if x < y]

    @property
    def num_edges(self) -> int:
        return sum(len(nb) for nb in self.adj) // 2

    def vertices(self) -> range:
        return range(self.n)

    def induced(self, subset: Iterable[int]) -> tuple["Graph", list[int]]:
        """Induced subgraph on ``subset``; returns it with the old ids in new order."""
        old = sorted(set(subset))
        new_of = {v: i for i, v in enumerate(old)}
        edges = [(new_of[u], new_of[v]) for u in old for v in self.adj[u]
                 if v in new_of and u < v]
        coords = None if self.coords is None else [self.coords[v] for v in old]
        return Graph.from_edges(len(old), edges, coords), old

    def to_json(self) -> str:
        data = {"n": self.n, "edges": [list(e) for e in self.edges()]}
        if self.coords is not None:
            data["coords"] = [list(c) for c in self.coords]
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        data = json.loads(text)
        return cls.from_edges(int(data["n"]), data["edges"], data.get("coords"))

    def digest(self) -> str:
        import hashlib
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# small graph families used by tests and the verification matrix

def path_graph(k: int) -> Graph:
    return Graph.from_edges(k, [(i, i + 1) for i in range(k - 1)])


def cycle_graph(k: int) -> Graph:
    if k < 3:
        raise ValueError("cycle graph needs k >= 3")
    return Graph.from_edges(k, [(i, (i + 1) % k) for i in range(k)])


def complete_graph(k: int) -> Graph:
    return Graph.from_edges(k, itertools.combinations(range(k), 2))


def grid_graph(rows: int, cols: int) -> Graph:
    """Free-boundary ``rows x cols`` patch of Z^2, vertex ``r*cols + c``."""
    def vid(r, c):
        return r * cols + c
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((vid(r, c), vid(r, c + 1)))
            if r + 1 < rows:
                edges.append((vid(r, c), vid(r + 1, c)))
    coords = [(r, c) for r in range(rows) for c in range(cols)]
    return Graph.from_edges(rows * cols, edges, coords)


def disjoint_union(*graphs: Graph) -> Graph:
    edges, off = [], 0
    for g in graphs:
        edges += [(u + off, v + off) for u, v in g.edges()]
        off += g.n
    return Graph.from_edges(off, edges)


# ---------------------------------------------------------------------------
# cylinders

def transverse_range(width: int) -> list[int]:
    """Integer points of ``(-width/2, width/2]`` in increasing order."""
    lo = -(width // 2) + (1 if width % 2 == 0 else 0)
    return list(range(lo, lo + width))


def wrap(t: int, width: int) -> int:
    """Representative of ``t mod width`` inside ``(-width/2, width/2]``."""
    lo = transverse_range(width)[0]
    return (t - lo) % width + lo


def torus_dist(a: int, b: int, width: int) -> int:
    r = (a - b) % width
    return min(r, width - r)


@dataclass(frozen=True)
class CylinderLattice:
    """``[0, n] x (-w/2, w/2]^(d-1)`` with periodic transverse coordinates.

    ``width`` defaults to ``n`` (the square box); tests use narrower strips
    such as the ``n=9, width=6`` cylinder.
    """

    n: int
    d: int
    width: int
    graph: Graph
    index: dict = field(repr=False, compare=False)

    @property
    def coords(self) -> tuple[tuple[int, ...], ...]:
        return self.graph.coords

    def coord_of(self, v: int) -> tuple[int, ...]:
        return self.graph.coords[v]

    def vertex(self, x1: int, *xhat: int) -> int:
        key = (x1,) + tuple(wrap(t, self.width) for t in xhat)
        return self.index[key]

    @property
    def origin(self) -> int:
        return self.vertex(0, *([0] * (self.d - 1)))

    def hyperplane(self, j: int) -> list[int]:
        """Vertices of ``l_j = {x : x1 = j}``."""
        return [v for v, c in enumerate(self.graph.coords) if c[0] == j]

    def transverse_dist(self, u: int, v: int) -> int:
        """l-infinity toroidal distance of the transverse parts."""
        cu, cv = self.graph.coords[u], self.graph.coords[v]
        return max((torus_dist(a, b, self.width) for a, b in zip(cu[1:], cv[1:])), default=0)

    def transverse_offset(self, u: int, v: int) -> tuple[int, ...]:
        """Signed transverse displacement ``xhat(v) - xhat(u)`` wrapped into the period."""
        cu, cv = self.graph.coords[u], self.graph.coords[v]
        return tuple(wrap(b - a, self.width) for a, b in zip(cu[1:], cv[1:]))


def build_cylinder(n: int, d: int = 2, width: int | None = None,
                   vertex_cap: int = DEFAULT_VERTEX_CAP) -> CylinderLattice:
    """Cylinder lattice with open first coordinate and periodic transverse ones.

    A transverse period of 2 would give a double edge; it is deduplicated so
    the graph stays simple.
    """
    if width is None:
        width = n
    if n < 1 or d < 2 or width < 1:
        raise ValueError("need n >= 1, d >= 2, width >= 1")
    size = (n + 1) * width ** (d - 1)
    if size > vertex_cap:
        raise CapacityError(f"cylinder has {size} vertices, cap is {vertex_cap}")
    trans = transverse_range(width)
    coords = [(x1,) + xh for x1 in range(n + 1)
              for xh in itertools.product(trans, repeat=d - 1)]
    index = {c: i for i, c in enumerate(coords)}
    edges = set()
    for i, c in enumerate(coords):
        if c[0] < n:
            edges.add((i, index[(c[0] + 1,) + c[1:]]))
        if width > 1:
            for k in range(1, d):
                nb = list(c)
                nb[k] = wrap(c[k] + 1, width)
                j = index[tuple(nb)]
                edges.add((min(i, j), max(i, j)))
    g = Graph.from_edges(len(coords), sorted(edges), coords)
    return CylinderLattice(n, d, width, g, index)


# ---------------------------------------------------------------------------
# distances

def _bfs(g: Graph, sources: Iterable[int], allowed=None) -> dict[int, int]:
    dist = {}
    queue = deque()
    for s in sources:
        if s not in dist:
            dist[s] = 0
            queue.append(s)
    while queue:
        x = queue.popleft()
        for y in g.adj[x]:
            if y not in dist and (allowed is None or y in allowed):
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def graph_distance(g: Graph, a: Iterable[int], b: Iterable[int]) -> float:
    """Minimum graph distance between two nonempty vertex sets (``inf`` if disconnected)."""
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("graph_distance needs nonempty vertex sets")
    if a & b:
        return 0
    src, dst = (a, b) if len(a) <= len(b) else (b, a)
    dist = _bfs(g, src)
    found = [dist[v] for v in dst if v in dist]
    return min(found) if found else INF


def distances_from(g: Graph, sources: Iterable[int]) -> dict[int, int]:
    return _bfs(g, sources)


def is_connected(g: Graph, subset: Iterable[int] | None = None) -> bool:
    verts = set(range(g.n)) if subset is None else set(subset)
    if not verts:
        return True
    start = next(iter(verts))
    return len(_bfs(g, [start], verts)) == len(verts)


# ---------------------------------------------------------------------------
# symmetries

class SymmetryGroup:
    """Finite group of graph automorphisms stored as permutation tuples."""

    def __init__(self, graph: Graph, elements: Iterable[Sequence[int]], check: bool = True):
        self.graph = graph
        elems = []
        seen = set()
        for e in elements:
            t = tuple(int(v) for v in e)
            if t not in seen:
                seen.add(t)
                elems.append(t)
        ident = tuple(range(graph.n))
        if ident in seen:
            elems.remove(ident)
        self.elements: tuple[tuple[int, ...], ...] = (ident, *sorted(elems))
        if check:
            self.validate()

    @classmethod
    def generated_by(cls, graph: Graph, generators: Iterable[Sequence[int]]) -> "SymmetryGroup":
        gens = [tuple(g) for g in generators]
        ident = tuple(range(graph.n))
        group = {ident}
        frontier = [ident]
        while frontier:
            nxt = []
            for h in frontier:
                for s in gens:
                    c = tuple(s[h[v]] for v in range(graph.n))
                    if c not in group:
                        group.add(c)
                        nxt.append(c)
            frontier = nxt
        return cls(graph, group)

    @classmethod
    def trivial(cls, graph: Graph) -> "SymmetryGroup":
        return cls(graph, [])

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def validate(self) -> None:
        g = self.graph
        elems = set(self.elements)
        edges = g.edges()
        for phi in self.elements:
            if sorted(phi) != list(range(g.n)):
                raise InvariantViolation("group element is not a bijection")
            for x, y in edges:
                if not g.has_edge(phi[x], phi[y]):
                    raise InvariantViolation(f"{phi} is not an automorphism")
            inv = [0] * g.n
            for v, w in enumerate(phi):
                inv[w] = v
            if tuple(inv) not in elems:
                raise InvariantViolation("group not closed under inverse")
            for psi in self.elements:
                if tuple(phi[psi[v]] for v in range(g.n)) not in elems:
                    raise InvariantViolation("group not closed under composition")

    def orbit_of_set(self, subset: Iterable[int]) -> frozenset[int]:
        """``Phi(A) = union of phi(A)``."""
        s = set(subset)
        return frozenset(phi[v] for phi in self.elements for v in s)

    def is_compatible(self, subset: Iterable[int]) -> bool:
        s = frozenset(subset)
        return all(frozenset(phi[v] for v in s) == s for phi in self.elements)


def doubled_graph(g: Graph) -> tuple[Graph, SymmetryGroup]:
    """Disjoint union of two copies of ``g`` (copy 2 shifted by ``n``) and the swap group."""
    dg = disjoint_union(g, g)
    swap = tuple((v + g.n) % (2 * g.n) for v in range(2 * g.n))
    return dg, SymmetryGroup(dg, [swap])


def reflection_group(lat: CylinderLattice, axis_point: int) -> SymmetryGroup:
    """Group generated by the transverse reflections ``t -> 2 a - t`` about ``axis_point``.

    On a cycle of any period, reflecting about a vertex is an automorphism, so
    the generators always validate.
    """
    a = lat.coord_of(axis_point)
    gens = []
    for k in range(1, lat.d):
        img = []
        for c in lat.coords:
            nc = list(c)
            nc[k] = wrap(2 * a[k] - c[k], lat.width)
            img.append(lat.index[tuple(nc)])
        gens.append(img)
    return SymmetryGroup.generated_by(lat.graph, gens)


def automorphism_group(g: Graph, max_size: int = 10_000) -> SymmetryGroup:
    """Full automorphism group of a small graph (via networkx VF2)."""
    import networkx as nx
    from networkx.algorithms.isomorphism import GraphMatcher

    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(g.edges())
    elems = []
    for m in GraphMatcher(G, G).isomorphisms_iter():
        elems.append(tuple(m[v] for v in range(g.n)))
        if len(elems) > max_size:
            raise CapacityError("automorphism group too large")
    return SymmetryGroup(g, elems)
