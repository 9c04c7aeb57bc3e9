import itertools

import pytest
from hypothesis import given, settings, strategies as st

from srp.errors import CapacityError, InvariantViolation
from srp.lattice import (Graph, automorphism_group, build_cylinder, complete_graph, cycle_graph,
                         graph_distance, grid_graph, is_connected, path_graph, reflection_group,
                         torus_dist, wrap)
from srp.perm import (GraphPermutation, OpenCycleConfig, cycle_of, energy, flatten_walk,
                      is_valid_permutation, orbit, walk_of)


def test_small_families():
    assert complete_graph(4).num_edges == 6
    assert path_graph(5).num_edges == 4
    assert cycle_graph(5).num_edges == 5
    assert grid_graph(3, 3).num_edges == 12


def test_graph_rejects_asymmetric_adjacency():
    with pytest.raises(InvariantViolation):
        Graph(2, ((1,), ()))


def test_graph_json_roundtrip():
    g = grid_graph(2, 3)
    h = Graph.from_json(g.to_json())
    assert h == g
    assert h.digest() == g.digest()


def test_cylinder_shape_and_wrap():
    lat = build_cylinder(3, width=4)
    assert lat.graph.n == 16
    # each vertex has its two transverse neighbours plus one or two longitudinal ones
    degs = sorted(set(len(a) for a in lat.graph.adj))
    assert degs == [3, 4]
    assert lat.coord_of(lat.origin) == (0, 0)
    assert len(lat.hyperplane(3)) == 4


def test_cylinder_width_two_is_simple():
    lat = build_cylinder(2, width=2)
    assert all(len(set(a)) == len(a) for a in lat.graph.adj)


def test_cylinder_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_cylinder(0)
    with pytest.raises(CapacityError):
        build_cylinder(10, d=3, width=10, vertex_cap=100)


@given(st.integers(1, 12), st.integers(-30, 30), st.integers(-30, 30))
def test_torus_dist_is_a_metric_on_the_circle(w, a, b):
    d = torus_dist(a, b, w)
    assert 0 <= d <= w // 2
    assert d == torus_dist(b, a, w)
    assert torus_dist(wrap(a, w), a, w) == 0


def test_graph_distance_and_connectivity():
    g = grid_graph(3, 3)
    assert graph_distance(g, [0], [8]) == 4
    assert is_connected(g)
    assert not is_connected(g, [0, 8])


def test_automorphisms():
    assert len(automorphism_group(cycle_graph(5)).elements) == 10
    assert len(automorphism_group(grid_graph(3, 3)).elements) == 8
    assert len(automorphism_group(complete_graph(4)).elements) == 24


def test_reflection_group_fixes_axis():
    lat = build_cylinder(3, width=5)
    grp = reflection_group(lat, lat.origin)
    assert len(grp.elements) == 2
    for e in grp.elements:
        assert e[lat.origin] == lat.origin


def _brute_permutations(g):
    for img in itertools.permutations(range(g.n)):
        if all(y == x or g.has_edge(x, y) for x, y in enumerate(img)):
            yield img


def test_validity_matches_brute_force():
    g = grid_graph(2, 3)
    ok = set(_brute_permutations(g))
    for img in itertools.permutations(range(g.n)):
        assert is_valid_permutation(g, img) == (img in ok)


def test_rotation_of_a_cycle_graph():
    g = cycle_graph(5)
    p = GraphPermutation(g, [1, 2, 3, 4, 0])
    assert cycle_of(p, 0).vertices == (0, 1, 2, 3, 4)
    assert energy(p) == 5


def test_invalid_permutation_rejected():
    g = path_graph(3)
    with pytest.raises(InvariantViolation):
        GraphPermutation(g, [2, 1, 0])


def test_energy_counts_displaced_points():
    g = grid_graph(2, 2)  # 0-1 / 2-3
    p = GraphPermutation(g, [1, 3, 0, 2])
    assert energy(p) == 4
    assert [c.length for c in p.cycles()] == [4]
    assert orbit(p, [0]) == frozenset(range(4))


def test_open_config_walk_and_flatten():
    g = path_graph(5)
    c = OpenCycleConfig(g, [1, 2, 2, 4, 3], range(5), 0, 2)
    assert walk_of(c).vertices == (0, 1, 2)
    flat = flatten_walk(c)
    assert flat.image == (0, 1, 2, 4, 3)


def test_open_config_rejects_source_equal_sink():
    g = path_graph(3)
    with pytest.raises(InvariantViolation):
        OpenCycleConfig(g, [0, 1, 2], range(3), 1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_random_valid_permutation_cycles_partition_domain(seed):
    import random
    g = grid_graph(3, 3)
    perms = list(_cached_perms())
    img = perms[random.Random(seed).randrange(len(perms))]
    p = GraphPermutation(g, img)
    cyc = p.cycles()
    verts = [v for c in cyc for v in c.vertices]
    assert sorted(verts) == list(range(g.n))
    assert sum(c.length for c in cyc) == energy(p)
    for c in cyc:
        c.check(g)


_PERMS = None


def _cached_perms():
    global _PERMS
    if _PERMS is None:
        from srp.exact import enumerate_closed
        _PERMS = [img for img, _ in enumerate_closed(grid_graph(3, 3))]
    return _PERMS
