import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from srp.errors import CapacityError
from srp.exact import (closed_distribution, closed_histogram, count_closed, cycle_length,
                       cycle_polynomial, cycle_tail, enumerate_closed, enumerate_open,
                       open_histogram, open_polynomial_by_walks, partition_closed, poly_to_hist,
                       saw_census)
from srp.lattice import build_cylinder, complete_graph, cycle_graph, grid_graph, path_graph
from srp.suites import graph_matrix


def brute_histogram(g, domain=None):
    """Energy histogram by filtering all n! permutations."""
    dom = list(range(g.n)) if domain is None else sorted(domain)
    hist = {}
    for perm in itertools.permutations(dom):
        img = list(range(g.n))
        for x, y in zip(dom, perm):
            img[x] = y
        if all(y == x or g.has_edge(x, y) for x, y in zip(dom, perm)):
            h = sum(1 for x, y in zip(dom, perm) if x != y)
            hist[h] = hist.get(h, 0) + 1
    return hist


def zsq_counts(n_max):
    """Rooted walks and directed polygons on Z^2 from plain coordinate recursion."""
    saw = [0] * (n_max + 1)
    sap = [0] * (n_max + 1)
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]

    def rec(p, seen, k):
        saw[k] += 1
        if k == n_max:
            return
        for dx, dy in steps:
            q = (p[0] + dx, p[1] + dy)
            if q == (0, 0) and k + 1 >= 3:
                sap[k + 1] += 1
            if q not in seen:
                seen.add(q)
                rec(q, seen, k + 1)
                seen.discard(q)

    rec((0, 0), {(0, 0)}, 0)
    sap[0] = 1
    if n_max >= 2:
        sap[2] = 4
    return saw, sap


@pytest.mark.parametrize("name", [k for k, g in graph_matrix().items() if g.n <= 8])
def test_histogram_matches_permutation_filter(name):
    g = graph_matrix()[name]
    assert closed_histogram(g) == brute_histogram(g)
    assert poly_to_hist(cycle_polynomial(g)) == brute_histogram(g)


def test_count_on_a_subdomain():
    g = grid_graph(3, 3)
    dom = [0, 1, 3, 4, 5]
    assert count_closed(g, dom) == sum(brute_histogram(g, dom).values())


def test_partition_value():
    g = cycle_graph(5)
    hist = brute_histogram(g)
    alpha = 0.7
    z = sum(c * math.exp(-alpha * h) for h, c in hist.items())
    assert math.isclose(partition_closed(g, alpha).value, z, rel_tol=1e-12)


def test_distribution_sums_to_one():
    d = closed_distribution(grid_graph(2, 3), 1.3)
    assert math.isclose(sum(d.probabilities), 1.0, rel_tol=1e-12)


def test_capacity_error():
    with pytest.raises(CapacityError):
        list(enumerate_closed(grid_graph(4, 4), cap=100))


def test_open_polynomial_two_ways():
    lat = build_cylinder(2, width=3)
    g = lat.graph
    sinks = lat.hyperplane(2)
    for z in sinks:
        assert poly_to_hist(open_polynomial_by_walks(g, range(g.n), lat.origin, z)) == \
            open_histogram(g, range(g.n), lat.origin, z)


def test_open_enumeration_is_valid():
    g = path_graph(4)
    states = list(enumerate_open(g, range(4), 0, 3))
    assert len(states) == 1
    img, h, z = states[0]
    assert img == (1, 2, 3, 3) and h == 3 and z == 3


def test_cycle_length_counts_edges():
    assert cycle_length((0, 1, 2), 0) == 0
    assert cycle_length((1, 0, 2), 0) == 2
    assert cycle_length((1, 2, 0), 2) == 3


def test_cycle_tail_matches_enumeration():
    g = grid_graph(2, 3)
    alpha = 0.9
    t = cycle_tail(g, 0, alpha)
    w = {}
    for img, h in enumerate_closed(g):
        k = cycle_length(img, 0)
        w[k] = w.get(k, 0.0) + math.exp(-alpha * h)
    tot = sum(w.values())
    for ell in range(g.n + 1):
        want = sum(v for k, v in w.items() if k > ell) / tot
        assert math.isclose(t.tail(ell), want, rel_tol=1e-10, abs_tol=1e-15)


def test_square_lattice_census_matches_coordinate_recursion():
    n_max = 8
    saw, sap = zsq_counts(n_max)
    side = 2 * n_max + 3
    c = saw_census(grid_graph(side, side), (side // 2) * side + side // 2, n_max)
    assert c.saw == saw
    assert c.sap == sap


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.floats(0.1, 3.0))
def test_complete_graph_partition_is_sum_over_derangement_counts(k, alpha):
    # on K_k every permutation is allowed: weight by the number of moved points
    g = complete_graph(k)
    z = 0.0
    for m in range(k + 1):
        # permutations moving exactly m points = C(k, m) * derangements(m)
        der = round(math.factorial(m) * sum((-1) ** i / math.factorial(i) for i in range(m + 1)))
        z += math.comb(k, m) * der * math.exp(-alpha * m)
    assert math.isclose(partition_closed(g, alpha).value, z, rel_tol=1e-12)
