import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srp.branching import (GWProcess, OffspringLaw, check_orbit_domination, comparison_lemma_harness,
                           coupled_gw, dkw_epsilon, fit_cycle_bound, fit_tail_constants, orbit_size_law,
                           sample_total_population, simulate_gw, total_population_tail)
from srp.exact import enumerate_closed
from srp.lattice import cycle_graph, grid_graph, path_graph
from srp.perm import orbit_of_image

from oracles import explicit_plane_trees, forest_law


LAWS = [
    (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)),
    (Fraction(1, 3), Fraction(0), Fraction(2, 3)),
    (Fraction(3, 5), Fraction(1, 10), Fraction(1, 10), Fraction(1, 5)),
]


def test_plane_tree_enumeration_counts_catalan():
    assert [len(explicit_plane_trees(n)) for n in range(1, 8)] == [1, 1, 2, 5, 14, 42, 132]


@pytest.mark.parametrize("pmf", LAWS)
def test_single_root_law_equals_explicit_tree_sum(pmf):
    law = total_population_tail(GWProcess(OffspringLaw(pmf), 1), 9)
    for n in range(1, 10):
        want = Fraction(0)
        for t in explicit_plane_trees(n):
            w = Fraction(1)
            for k in t:
                w *= pmf[k] if k < len(pmf) else 0
            want += w
        assert law.pmf.get(n, Fraction(0)) == want


@pytest.mark.parametrize("pmf", LAWS)
@pytest.mark.parametrize("z0", [1, 2, 3])
def test_forest_law_equals_tree_recursion(pmf, z0):
    law = total_population_tail(GWProcess(OffspringLaw(pmf), z0), 9)
    want = forest_law(pmf, z0, 9)
    for n in range(1, 10):
        assert law.pmf.get(n, Fraction(0)) == want[n]
    assert law.remainder == 1 - sum(want.values())


def test_total_population_with_no_founders():
    law = total_population_tail(GWProcess(OffspringLaw(LAWS[0]), 0), 5)
    assert law.at_least(0) == 1 and law.greater(0) == 0


def test_subcritical_mean_identity():
    off = OffspringLaw((0.5, 0.3, 0.2))
    z0 = 3
    draws = sample_total_population(GWProcess(off, z0), 200_000, np.random.default_rng(11))
    assert (draws >= 0).all()
    mean = draws.mean()
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    want = z0 / (1 - off.mean)
    assert abs(mean - want) < 3 * se


def test_simulate_gw_extinct_run():
    run = simulate_gw(GWProcess(OffspringLaw.point(0), 4), 10, 0)
    assert run.total == 4 and not run.capped


def test_supercritical_runs_are_capped():
    out = sample_total_population(GWProcess(OffspringLaw((0.0, 0.0, 1.0)), 1), 5, 0, horizon=50, cap=1000)
    assert (out == -1).all()


def test_offspring_law_validation():
    with pytest.raises(ValueError):
        OffspringLaw((0.5, 0.6))
    with pytest.raises(ValueError):
        OffspringLaw(())
    assert OffspringLaw.point(2).mean == 2
    assert OffspringLaw((0.5, 0.5)).scaled(3).pmf == (0.5, 0, 0, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=2, max_size=4))
def test_exact_law_conserves_mass(weights):
    tot = sum(weights)
    pmf = tuple(Fraction(w, tot) for w in weights)
    law = total_population_tail(GWProcess(OffspringLaw(pmf), 2), 12)
    assert sum(law.pmf.values()) + law.remainder == 1
    assert all(p >= 0 for p in law.pmf.values())
    assert law.remainder >= 0


def test_cramer_rate_against_pmf_decay():
    off = OffspringLaw((0.6, 0.2, 0.2))
    law = total_population_tail(GWProcess(off, 1), 400)
    p1, p2 = float(law.pmf[301]), float(law.pmf[399])
    rate = -math.log(p2 / p1) / 98
    assert abs(rate - off.cramer_rate()) < 0.02


def test_fit_tail_constants_dominates():
    off = OffspringLaw((0.6, 0.2, 0.2))
    law = total_population_tail(GWProcess(off, 1), 120)
    fit = fit_tail_constants(law, rate=off.cramer_rate())
    for n in range(119):
        assert float(law.greater(n)) <= fit.bound(n) * (1 + 1e-12)


def test_coupled_processes_are_ordered():
    a, b = coupled_gw(OffspringLaw((0.4, 0.3, 0.3)), 2, 5, 8, np.random.default_rng(2), draws=200, width=400)
    assert (a <= b).all()


def test_dkw_and_comparison_harness():
    assert math.isclose(dkw_epsilon(100), math.sqrt(math.log(20) / 200))
    rng = np.random.default_rng(5)
    small = rng.geometric(0.6, size=2000)
    r = comparison_lemma_harness(small, lambda ell: 1.0 if ell <= 1 else 0.5 ** (ell - 1), 15)
    assert r.passed and r.precondition_ok
    bad = comparison_lemma_harness(small, lambda ell: 0.0, 5, certificates=[True, False])
    assert not bad.precondition_ok and bad.failures == [1]


def test_orbit_size_law_by_enumeration():
    g = grid_graph(2, 3)
    alpha = 0.8
    A = [0, 4]
    law = orbit_size_law(g, alpha, A)
    w = [0.0] * (g.n + 1)
    for img, h in enumerate_closed(g):
        w[len(orbit_of_image(img, A))] += math.exp(-alpha * h)
    tot = sum(w)
    for k in range(g.n + 1):
        assert math.isclose(law[k], w[k] / tot, rel_tol=1e-10, abs_tol=1e-15)


def test_orbit_domination_on_small_graphs():
    for g in (path_graph(4), cycle_graph(5), grid_graph(2, 3)):
        bound = fit_cycle_bound([g], 1.0)
        assert bound.certified
        for A in ([0], [0, 1]):
            assert check_orbit_domination(g, A, 1.0, bound).passed
