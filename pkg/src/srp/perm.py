"""Permutation configurations on graphs and the forced open-cycle configuration.

A ``GraphPermutation`` is a bijection with ``pi(x) = x`` or ``pi(x) ~ x``. An
``OpenCycleConfig`` additionally carries a source ``a`` and a sink ``z``; the
orbit of ``a`` is a self-avoiding walk that stops at ``z``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from srp.errors import InvariantViolation
from srp.lattice import Graph


def is_valid_permutation(g: Graph, image: Sequence[int], domain: Iterable[int] | None = None) -> bool:
    """Total validity check: bijective on ``domain`` and nearest-neighbour-or-fixed."""
    dom = set(range(g.n)) if domain is None else set(domain)
    if len(image) != g.n:
        return False
    seen = set()
    for x in dom:
        y = image[x]
        if not isinstance(y, (int,)) and not hasattr(y, "__index__"):
            return False
        y = int(y)
        if y not in dom or y in seen:
            return False
        if y != x and not g.has_edge(x, y):
            return False
        seen.add(y)
    for x in range(g.n):
        if x not in dom and image[x] != x:
            return False
    return True


@dataclass(frozen=True)
class CyclePath:
    """Ordered vertex sequence of a cycle (closed) or a self-avoiding walk (open)."""

    vertices: tuple[int, ...]
    closed: bool

    @property
    def length(self) -> int:
        """Number of edges: k for a closed k-cycle (0 for a fixed point), k-1 if open."""
        k = len(self.vertices)
        if self.closed:
            return 0 if k == 1 else k
        return k - 1

    def __len__(self) -> int:
        return len(self.vertices)

    def vertex_set(self) -> frozenset[int]:
        return frozenset(self.vertices)

    def check(self, g: Graph) -> None:
        vs = self.vertices
        if len(set(vs)) != len(vs):
            raise InvariantViolation("cycle path repeats a vertex")
        for u, v in zip(vs, vs[1:]):
            if not g.has_edge(u, v):
                raise InvariantViolation(f"{u}->{v} is not an edge")
        if self.closed and len(vs) > 1 and not g.has_edge(vs[-1], vs[0]):
            raise InvariantViolation("closing step is not an edge")


class GraphPermutation:
    """Spatial permutation of the vertices of ``graph`` (restricted to ``domain``).

    Vertices outside ``domain`` are fixed; this is how ``pi (+) id`` is
    represented. The preimage array is kept alongside the image.
    """

    __slots__ = ("graph", "image", "preimage", "domain")

    def __init__(self, graph: Graph, image: Sequence[int], domain: Iterable[int] | None = None,
                 check: bool = True):
        self.graph = graph
        self.image = tuple(int(v) for v in image)
        self.domain = frozenset(range(graph.n)) if domain is None else frozenset(domain)
        if check and not is_valid_permutation(graph, self.image, self.domain):
            raise InvariantViolation("not a valid graph permutation")
        pre = [0] * graph.n
        for x, y in enumerate(self.image):
            pre[y] = x
        self.preimage = tuple(pre)

    @classmethod
    def identity(cls, graph: Graph, domain: Iterable[int] | None = None) -> "GraphPermutation":
        return cls(graph, range(graph.n), domain, check=False)

    def __call__(self, x: int) -> int:
        return self.image[x]

    def __eq__(self, other) -> bool:
        return isinstance(other, GraphPermutation) and self.image == other.image

    def __hash__(self) -> int:
        return hash(self.image)

    def __repr__(self) -> str:
        return f"GraphPermutation({list(self.image)})"

    def cycles(self) -> list[CyclePath]:
        """Cycle decomposition of the domain, each cycle started at its smallest vertex."""
        seen = set()
        out = []
        for x in sorted(self.domain):
            if x in seen:
                continue
            out.append(cycle_of(self, x))
            seen.update(out[-1].vertices)
        return out

    def to_json(self) -> str:
        return json.dumps({"image": list(self.image), "graph": self.graph.digest()})

    @classmethod
    def from_json(cls, graph: Graph, text: str) -> "GraphPermutation":
        data = json.loads(text)
        if data.get("graph") not in (None, graph.digest()):
            raise InvariantViolation("permutation was saved for a different graph")
        return cls(graph, data["image"])


def energy(p: GraphPermutation) -> int:
    """Number of displaced points, ``sum_x 1{pi(x) != x}``."""
    return sum(1 for x in p.domain if p.image[x] != x)


def cycle_of(p: GraphPermutation, z: int) -> CyclePath:
    """Orbit of ``z`` in iteration order, starting at ``z``."""
    verts = [z]
    y = p.image[z]
    while y != z:
        verts.append(y)
        y = p.image[y]
    return CyclePath(tuple(verts), True)


def orbit(p: GraphPermutation, a: Iterable[int]) -> frozenset[int]:
    """``Or_pi(A)``: union of the cycles meeting ``A``."""
    out: set[int] = set()
    for x in a:
        if x in out:
            continue
        y = x
        while True:
            out.add(y)
            y = p.image[y]
            if y == x:
                break
    return frozenset(out)


def orbit_of_image(image: Sequence[int], a: Iterable[int]) -> frozenset[int]:
    """Same as :func:`orbit` on a raw image tuple."""
    out: set[int] = set()
    for x in a:
        if x in out:
            continue
        y = x
        while True:
            out.add(y)
            y = image[y]
            if y == x:
                break
    return frozenset(out)


# ---------------------------------------------------------------------------
# open cycles

class OpenCycleConfig:
    """A map in ``S_A^{a->z}``: bijection ``A\\{z} -> A\\{a}``, ``pi(z) = z``, nearest-neighbour steps."""

    __slots__ = ("graph", "image", "domain", "source", "sink")

    def __init__(self, graph: Graph, image: Sequence[int], domain: Iterable[int],
                 source: int, sink: int, check: bool = True):
        self.graph = graph
        self.image = tuple(int(v) for v in image)
        self.domain = frozenset(domain)
        self.source = source
        self.sink = sink
        if check:
            self.validate()

    def validate(self) -> None:
        g, img, dom, a, z = self.graph, self.image, self.domain, self.source, self.sink
        if a not in dom or z not in dom or a == z:
            raise InvariantViolation("source and sink must be distinct points of the domain")
        if img[z] != z:
            raise InvariantViolation("sink must be fixed")
        targets = set()
        for x in dom:
            y = img[x]
            if y != x and not g.has_edge(x, y):
                raise InvariantViolation(f"step {x}->{y} is not nearest-neighbour")
            if x == z:
                continue
            if y not in dom or y == a or y in targets:
                raise InvariantViolation("not a bijection from A\\{z} onto A\\{a}")
            targets.add(y)
        for x in range(g.n):
            if x not in dom and img[x] != x:
                raise InvariantViolation("points outside the domain must be fixed")
        walk_of(self)

    def __eq__(self, other) -> bool:
        return (isinstance(other, OpenCycleConfig) and self.image == other.image
                and self.source == other.source and self.sink == other.sink)

    def __hash__(self) -> int:
        return hash((self.image, self.source, self.sink))

    def __repr__(self) -> str:
        return f"OpenCycleConfig(a={self.source}, z={self.sink}, image={list(self.image)})"


def open_energy(c: OpenCycleConfig) -> int:
    """``sum_x |pi(x) - x|``; with nearest-neighbour steps this counts displaced points."""
    return sum(1 for x in c.domain if c.image[x] != x)


def walk_of(c: OpenCycleConfig) -> CyclePath:
    """The self-avoiding walk from the source to the sink embedded in ``c``."""
    verts = [c.source]
    seen = {c.source}
    x = c.source
    while x != c.sink:
        x = c.image[x]
        if x in seen:
            raise InvariantViolation("orbit of the source never reaches the sink")
        seen.add(x)
        verts.append(x)
    return CyclePath(tuple(verts), False)


def flatten_walk(c: OpenCycleConfig) -> GraphPermutation:
    """Permutation on the domain fixing every walk vertex and agreeing with ``c`` elsewhere."""
    walk = walk_of(c).vertex_set()
    img = [c.image[x] if x not in walk else x for x in range(c.graph.n)]
    return GraphPermutation(c.graph, img, c.domain)
