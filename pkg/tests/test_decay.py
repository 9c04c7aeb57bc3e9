import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srp.decay import (check_spatial_markov, check_strong_markov, closure_builder, constant_builder,
                       constants_bundle, finite_graph_constants, minimal_invariant_closure,
                       orbit_builder, partition_ratio_matrix, run_builder, solve_alpha0,
                       verify_boundary_decay, verify_c1_bound, verify_removal_bound,
                       verify_single_point_bound)
from srp.errors import InfeasibleParameters, StrategyContractError, UnverifiedHypothesis
from srp.exact import SawCensus, saw_census
from srp.lattice import automorphism_group, complete_graph, cycle_graph, grid_graph, path_graph
from srp.runner import SQUARE_LOG_MU


def f_mp(a):
    return a + mpmath.log(1 + mpmath.exp(-2 * a)) / 2


def alpha0_oracle(log_mu):
    with mpmath.workdps(40):
        return float(mpmath.findroot(lambda a: f_mp(a) - log_mu, log_mu))


@pytest.mark.parametrize("log_mu", [0.4, 0.7, 1.0, SQUARE_LOG_MU, 1.5, 3.0])
def test_alpha0_against_root_finder(log_mu):
    a0 = solve_alpha0(log_mu)
    assert abs(a0 - alpha0_oracle(log_mu)) < 1e-12
    assert a0 < log_mu


@settings(max_examples=100)
@given(st.floats(0.05, 20.0), st.floats(0.05, 20.0))
def test_alpha0_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert solve_alpha0(lo) <= solve_alpha0(hi)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_alpha0_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        solve_alpha0(bad)


def test_constants_by_hand():
    alpha, lm = 1.5, SQUARE_LOG_MU
    census = saw_census(grid_graph(23, 23), 11 * 23 + 11, 10)
    b = constants_bundle(alpha, lm, None, census)
    a0 = alpha0_oracle(lm)
    assert math.isclose(b.c0, (alpha - a0) / 2, rel_tol=1e-10)
    lmd = math.log(math.exp(lm) + b.delta)
    want_cd = max(c / math.exp(n * lmd) for n, c in enumerate(census.sap) if c)
    assert b.C_delta == pytest.approx(want_cd) == 1.0
    assert b.C0 == pytest.approx(1 / (1 - math.exp(-b.c0)))
    q = math.exp(-2 * alpha)
    assert b.c1 == pytest.approx(1 / (1 + (1 + q) * math.exp(-2 * b.c0) / (1 - math.exp(-b.c0))))
    assert b.overlay(0) == pytest.approx(b.C0)


def test_constants_reject_small_alpha_and_bad_delta():
    with pytest.raises(InfeasibleParameters):
        constants_bundle(0.5, SQUARE_LOG_MU)
    with pytest.raises(InfeasibleParameters):
        constants_bundle(1.5, SQUARE_LOG_MU, delta=-0.1)
    with pytest.raises(InfeasibleParameters):
        constants_bundle(1.0, SQUARE_LOG_MU, delta=5.0)


def test_constant_census_helper():
    c = SawCensus.constant(4, 2)
    b = constants_bundle(3.0, 1.0, 0.5, c)
    assert b.C_delta == pytest.approx(max(1.0, max(2 / (math.e + 0.5) ** n for n in range(1, 5))))


def test_removal_bound_on_k2_by_hand():
    # Z(V) = 1 + q^2, and removing the edge leaves Z = 1
    alpha = 0.8
    q2 = math.exp(-2 * alpha)
    assert 1 / (1 + q2) <= (1 + q2) ** -0.5
    r = verify_removal_bound(complete_graph(2), alpha)
    assert r.passed


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_removal_and_single_point_bounds(alpha):
    for g in (path_graph(5), cycle_graph(5), grid_graph(2, 3)):
        assert verify_removal_bound(g, alpha).passed
        assert verify_single_point_bound(g, alpha).passed


def test_c1_bound():
    g = grid_graph(2, 3)
    rep = verify_c1_bound(g, range(g.n), [0, 5], 1.0)
    assert rep.passed


def naive_closure(img, maps, A):
    S = set(A)
    while True:
        pre = {y: x for x, y in enumerate(img)}
        T = S | {img[x] for x in S} | {pre[x] for x in S} | {m[x] for m in maps for x in S}
        if T == S:
            return frozenset(S)
        S = T


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sets(st.integers(0, 8), min_size=1, max_size=3))
def test_closure_matches_naive_fixed_point(seed, A):
    g = grid_graph(3, 3)
    from srp.exact import enumerate_closed
    perms = [img for img, _ in enumerate_closed(g)]
    img = perms[seed % len(perms)]
    grp = automorphism_group(g)
    maps = list(grp.elements[: 1 + seed % len(grp.elements)])
    assert minimal_invariant_closure(img, maps, A) == naive_closure(img, maps, A)


def test_spatial_markov_small():
    rep = check_spatial_markov(path_graph(4), 1.0)
    assert rep.passed and len(rep.results) > 0


def test_strong_markov_builders():
    g = grid_graph(2, 3)
    assert check_strong_markov(g, 1.0, orbit_builder(0), [5]).passed
    assert check_strong_markov(g, 1.0, closure_builder(automorphism_group(g), [0]), [2]).passed


def test_builder_that_peeks_outside_q_is_rejected():
    def peeker(probe):
        probe.image(3)
        return [0]
    with pytest.raises(StrategyContractError):
        run_builder(peeker, (0, 1, 2, 3))
    with pytest.raises(StrategyContractError):
        run_builder(constant_builder([0]), (1, 0, 2, 3))


def test_finite_graph_constants_certification():
    hi = finite_graph_constants(grid_graph(2, 3), 2.0)
    assert hi.hypothesis_ok
    lo = finite_graph_constants(complete_graph(4), 0.5)
    assert not lo.hypothesis_ok


def test_boundary_decay_requires_certified_constants():
    g = complete_graph(4)
    with pytest.raises(UnverifiedHypothesis):
        verify_boundary_decay(g, [0, 1, 2], [0], 0.5)
    rep = verify_boundary_decay(grid_graph(2, 3), range(5), [0], 2.0)
    assert rep.passed


def test_partition_ratio_matrix_on_a_certified_graph():
    g = path_graph(5)
    b = finite_graph_constants(g, 2.0)
    assert b.hypothesis_ok
    rep = partition_ratio_matrix(g, 2.0, b)
    assert rep.passed and len(rep.results) > 0
