import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srp.exact import enumerate_open
from srp.lattice import build_cylinder, torus_dist
from srp.perm import OpenCycleConfig, walk_of
from srp.regeneration import (AdmissibleSet, admissibility, brute_force_regeneration_set, check_numbregpoint,
                              cone, estimate_rho_tail, extract_regen_chain, fluctuation_stats,
                              lifted_transverse, log_scale, open_config, pre_regeneration_points,
                              reflect_config, regeneration_points, regeneration_set, rho_decomposition,
                              sample_cylinder_walks, satisfies_r1_r4, spanning_walks, walk_size,
                              wilson_interval)
from srp.samplers import RngStream


def straight(lat, x1_from, x1_to, t=0):
    return [lat.vertex(i, t) for i in range(x1_from, x1_to + 1)]


def reference_pre_regeneration(coords, walk, width, log_n):
    """Direct reading of the definition on plain coordinate tuples."""
    out = []
    for i, x in enumerate(walk):
        cx = coords[x]
        if any(coords[p][0] >= cx[0] for p in walk[:i]):
            continue
        ok = True
        for p in walk[i + 1:]:
            cp = coords[p]
            dx = cp[0] - cx[0]
            td = max(torus_dist(a, b, width) for a, b in zip(cp[1:], cx[1:]))
            if not (dx >= log_n or dx >= td):
                ok = False
                break
        if ok:
            out.append(x)
    return out


def all_saws(g, start, max_steps):
    path, seen = [start], {start}

    def rec():
        yield tuple(path)
        if len(path) > max_steps:
            return
        for w in g.adj[path[-1]]:
            if w not in seen:
                seen.add(w)
                path.append(w)
                yield from rec()
                path.pop()
                seen.discard(w)

    yield from rec()


_STATES = {}


def open_states(n, w):
    if (n, w) not in _STATES:
        lat = build_cylinder(n, width=w)
        g = lat.graph
        _STATES[(n, w)] = (lat, list(enumerate_open(g, range(g.n), lat.origin, lat.hyperplane(n))))
    return _STATES[(n, w)]


def config_of(lat, state):
    img, _, z = state
    return OpenCycleConfig(lat.graph, img, range(lat.graph.n), lat.origin, z)


# -- log scale and cones ------------------------------------------------------

def test_log_scale_is_ceiling_of_ln():
    assert [log_scale(n) for n in (1, 2, 3, 7, 8, 16, 20, 21, 32)] == [1, 1, 2, 2, 3, 3, 3, 4, 4]
    assert log_scale(8, base=2) == 3


def test_cone_membership():
    lat = build_cylinder(8, width=8)
    y = lat.vertex(2, 0)
    c = cone(lat, y, 3)
    assert lat.vertex(3, 1) in c
    assert lat.vertex(3, 2) not in c
    assert lat.vertex(5, 4) in c  # far right: whole cross-section
    assert lat.vertex(1, 0) not in c
    assert y in c


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_admissibility_levels_are_nested(seed, frac):
    lat = build_cylinder(5, width=4)
    rnd = random.Random(seed)
    y = rnd.randrange(lat.graph.n)
    S = {v for v in range(lat.graph.n) if rnd.random() < frac} | cone(lat, y, 2).members() \
        if rnd.random() < 0.5 else {v for v in range(lat.graph.n) if rnd.random() < frac}
    level = admissibility(lat, y, S, 2)
    far = {v for v, c in enumerate(lat.coords) if c[0] >= lat.coord_of(y)[0] + 2}
    ray = {v for v, c in enumerate(lat.coords) if c[0] >= lat.coord_of(y)[0] and c[1:] == lat.coord_of(y)[1:]}
    assert (level is not None) == far.issubset(S)
    if level in ("admissible", "strict"):
        assert ray.issubset(S)
    if level == "strict":
        assert cone(lat, y, 2).members() <= frozenset(S)
    # adding points never lowers the level
    order = [None, "weak", "admissible", "strict"]
    bigger = admissibility(lat, y, set(S) | {0, 1}, 2)
    assert order.index(bigger) >= order.index(level)


def test_admissible_set_constructor():
    lat = build_cylinder(4, width=3)
    with pytest.raises(ValueError):
        AdmissibleSet.of(lat, lat.origin, [])
    full = AdmissibleSet.of(lat, lat.origin, range(lat.graph.n))
    assert full.level == "strict"


# -- pre-regeneration points --------------------------------------------------

def test_pre_regeneration_matches_reference_on_every_short_walk():
    lat = build_cylinder(11, width=4)
    g, log_n = lat.graph, log_scale(lat.n)
    count = 0
    for walk in all_saws(g, lat.origin, 10):
        assert pre_regeneration_points(walk, lat, log_n) == \
            reference_pre_regeneration(lat.coords, walk, lat.width, log_n)
        count += 1
    assert count > 10_000


def test_straight_walk_every_point_is_pre_regeneration():
    lat = build_cylinder(8, width=5)
    w = straight(lat, 0, 8)
    assert pre_regeneration_points(w, lat) == w


def test_backtrack_kills_earlier_points():
    lat = build_cylinder(6, width=5)
    # right, up, up, left, up ... x1 = 0 then 1 twice: the second visit of column 0 is not new
    w = [lat.vertex(0, 0), lat.vertex(1, 0), lat.vertex(1, 1), lat.vertex(0, 1), lat.vertex(0, 2),
         lat.vertex(1, 2), lat.vertex(2, 2)]
    pts = pre_regeneration_points(w, lat, 2)
    assert lat.vertex(0, 0) not in pts  # (0, 1) is outside its cone
    assert lat.vertex(1, 0) not in pts
    assert lat.vertex(2, 2) in pts


# -- regeneration sets ---------------------------------------------------------

def test_constructed_configurations_on_an_8_by_4_cylinder():
    lat = build_cylinder(7, width=4)
    v = lat.vertex
    walk = straight(lat, 0, 7)
    x = v(3, 0)
    log_n = log_scale(lat.n)
    assert log_n == 2

    plain = open_config(lat, walk)
    R = regeneration_set(plain, lat, x)
    assert R == frozenset(u for u, c in enumerate(lat.coords) if c[0] >= 3)

    # a two-cycle straddling the hyperplane of x is pulled into the left part, with its mirror image
    two = open_config(lat, walk, cycles=[[v(2, 1), v(3, 1)]])
    R = regeneration_set(two, lat, x)
    assert R is not None
    assert v(3, 1) not in R and v(3, -1) not in R
    assert all(satisfies_r1_r4(two, lat, x, R))

    # a six-cycle from the left half reaching into the cone leaves no regeneration set
    six = open_config(lat, walk, cycles=[[v(2, 1), v(3, 1), v(4, 1), v(4, 2), v(3, 2), v(2, 2)]])
    assert v(4, 1) in cone(lat, x, log_n)
    assert regeneration_set(six, lat, x) is None


def test_non_pre_regeneration_point_is_rejected():
    lat = build_cylinder(6, width=5)
    w = [lat.vertex(0, 0), lat.vertex(1, 0), lat.vertex(1, 1), lat.vertex(0, 1), lat.vertex(0, 2),
         lat.vertex(1, 2)] + straight(lat, 2, 6, 2)
    c = open_config(lat, w)
    with pytest.raises(ValueError):
        regeneration_set(c, lat, lat.vertex(1, 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_regeneration_set_is_the_largest_r1_r4_set(seed):
    lat, states = open_states(3, 3)
    c = config_of(lat, states[random.Random(seed).randrange(len(states))])
    for x in pre_regeneration_points(c, lat):
        R = regeneration_set(c, lat, x)
        assert R == brute_force_regeneration_set(c, lat, x)
        if R is not None:
            assert all(satisfies_r1_r4(c, lat, x, R))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_regeneration_points_commute_with_reflection(seed):
    lat, states = open_states(3, 3)
    c = config_of(lat, states[random.Random(seed).randrange(len(states))])
    m = {v: lat.vertex(co[0], -co[1]) for v, co in enumerate(lat.coords)}
    r = reflect_config(c, lat, lat.origin)
    assert regeneration_points(r, lat) == [m[x] for x in regeneration_points(c, lat)]


# -- the chain -----------------------------------------------------------------

def test_straight_walk_chain_at_n16():
    lat = build_cylinder(16, width=16)
    c = open_config(lat, straight(lat, 0, 16))
    rec = extract_regen_chain(c, lat)
    assert rec.log_n == 3
    assert [lat.coord_of(x)[0] for x in rec.points] == [0, 3, 6, 9, 12, 15, 16]
    assert rec.sets[-1] == frozenset()
    assert rec.terminal == rec.points[-1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_chain_spacing_and_sets(seed):
    lat, states = open_states(4, 3)
    c = config_of(lat, states[random.Random(seed).randrange(len(states))])
    rec = extract_regen_chain(c, lat)
    cols = [lat.coord_of(x)[0] for x in rec.points]
    assert rec.points[0] == lat.origin and rec.points[-1] == walk_of(c).vertices[-1]
    for a, b in zip(cols[1:-1], cols[2:-1]):
        assert b - a >= rec.log_n
    if len(cols) > 2:
        assert cols[1] >= rec.log_n
    order = {v: i for i, v in enumerate(walk_of(c).vertices)}
    assert [order[x] for x in rec.points] == sorted(order[x] for x in rec.points)
    for x, R in zip(rec.points[1:-1], rec.sets[1:-1]):
        assert all(satisfies_r1_r4(c, lat, x, R))


def test_mean_transverse_position_of_first_regeneration_point_is_zero():
    lat, states = open_states(3, 3)
    alpha = 1.0
    num = den = 0.0
    for s in states:
        c = config_of(lat, s)
        rec = extract_regen_chain(c, lat)
        lift = lifted_transverse(rec.walk, lat)
        i = rec.walk.vertices.index(rec.points[1])
        w = math.exp(-alpha * s[1])
        num += w * lift[i, 0]
        den += w
    assert abs(num / den) < 1e-12


# -- rho_L ---------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_rho_decomposition_partitions_the_walk(seed, L):
    lat, states = open_states(4, 3)
    c = config_of(lat, states[random.Random(seed).randrange(len(states))])
    d = rho_decomposition(c, lat, L)
    vs = walk_of(c).vertices
    assert d.rho.vertices + d.tail.vertices == vs
    assert d.tail.vertices[0] == d.x_L
    assert lat.coord_of(d.x_L)[0] == L
    assert all(lat.coord_of(v)[0] != L for v in d.tail.vertices[1:])
    assert d.size == len(d.rho.vertices)


def test_rho_decomposition_needs_the_column():
    lat = build_cylinder(6, width=3)
    with pytest.raises(ValueError):
        rho_decomposition(straight(lat, 0, 3), lat, 5)


def test_estimate_rho_tail_exact_on_small_cylinder():
    lat, states = open_states(3, 3)
    g = lat.graph
    A = frozenset(range(g.n))
    L, delta, alpha = 2, 0.2, 1.0
    B = frozenset(v for v, c in enumerate(lat.coords) if c[0] <= 2)
    num = den = 0.0
    for img, h, z in states:
        vs = walk_of(OpenCycleConfig(g, img, A, lat.origin, z)).vertices
        k = max(i for i, v in enumerate(vs) if lat.coord_of(v)[0] == L)
        rho = vs[:k]
        if set(rho) <= B:
            w = math.exp(-alpha * h)
            den += w
            num += w * (len(rho) >= (1 + delta) * L)
    est = estimate_rho_tail(lat, lat.origin, A, B, L, delta, alpha)
    assert est.exact and est.defined
    assert math.isclose(est.value, num / den, rel_tol=1e-12)


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(5, 100)
    assert lo < 0.05 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)


# -- numbregpoint --------------------------------------------------------------

def test_walk_size_measures():
    assert walk_size([1, 2, 3]) == 3
    assert walk_size([1, 2, 3], "steps") == 2
    with pytest.raises(ValueError):
        walk_size([1], "edges")


def test_spanning_walks_are_exactly_the_qualifying_ones():
    lat = build_cylinder(5, width=4)
    L, delta = 3, 0.4
    got = set(spanning_walks(lat, L, (1 + delta) * L, starts=[lat.origin]))
    want = set()
    for w in all_saws(lat.graph, lat.origin, 6):
        if lat.coord_of(w[-1])[0] == L and walk_size(w) < (1 + delta) * L:
            want.add(w)
    assert got == want


def random_spanning_walk(lat, L, rnd, bias=0.8):
    g = lat.graph
    path = [lat.vertex(0, 0)]
    seen = set(path)
    while lat.coord_of(path[-1])[0] != L:
        nbrs = [w for w in g.adj[path[-1]] if w not in seen]
        if not nbrs:
            return None
        right = [w for w in nbrs if lat.coord_of(w)[0] > lat.coord_of(path[-1])[0]]
        w = rnd.choice(right) if right and rnd.random() < bias else rnd.choice(nbrs)
        path.append(w)
        seen.add(w)
    return path


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.sampled_from([0.1, 0.2, 0.3]), st.sampled_from(["vertices", "steps"]))
def test_numbregpoint_on_random_long_walks(seed, delta, measure):
    lat = build_cylinder(24, width=8)
    L = 20
    w = random_spanning_walk(lat, L, random.Random(seed), bias=0.85)
    if w is None:
        return
    r = check_numbregpoint(w, lat, L, delta, measure)
    if r is None:
        return
    assert r.passed, r.params


# -- fluctuation statistics ----------------------------------------------------

def test_lifted_transverse_unwraps():
    lat = build_cylinder(3, width=4)
    w = [lat.vertex(0, t) for t in (0, 1, 2, 3, 4)]  # wraps once around
    lift = lifted_transverse(w, lat)
    assert lift[:, 0].tolist() == [0, 1, 2, 3, 4]


def test_fluctuation_stats_on_exact_samples_is_symmetric():
    lat = build_cylinder(3, width=3)
    configs = sample_cylinder_walks(lat, 1.0, 400, RngStream(1, 0).generator())
    fs = fluctuation_stats(configs, lat)
    assert fs.samples == 400
    assert len(fs.increments) == sum(fs.chain_lengths - 1)
    lo, hi = fs.increment_ci()
    assert lo[0] <= 0.0 <= hi[0]
    q = fs.quantiles()
    assert list(q.values()) == sorted(q.values())
    assert 0.0 <= fs.exceed_probability(0.5) <= 1.0


def test_weighted_quantiles_respect_weights():
    lat = build_cylinder(3, width=3)
    a = open_config(lat, straight(lat, 0, 3))
    b = open_config(lat, [lat.vertex(0, 0), lat.vertex(0, 1), lat.vertex(1, 1), lat.vertex(2, 1),
                          lat.vertex(3, 1)])
    fs = fluctuation_stats([a, b], lat, weights=[1.0, 3.0])
    assert fs.quantiles((0.2, 0.5))[0.5] == pytest.approx(1 / fs.scale)
    assert fs.quantiles((0.2,))[0.2] == 0.0


def test_symmetrised_chain_sampler_on_a_large_cylinder():
    lat = build_cylinder(8, width=8)
    configs = sample_cylinder_walks(lat, 2.0, 50, RngStream(3, 0).generator(), sweeps_per_sample=2,
                                    burn_in_sweeps=20)
    assert len(configs) == 50
    for c in configs:
        c.validate()
        assert lat.coord_of(c.sink)[0] == lat.n
    assert np.isfinite(fluctuation_stats(configs, lat).increment_mean()[0]).all()
