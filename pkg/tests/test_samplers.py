import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srp.errors import InvariantViolation, StrategyContractError
from srp.exact import closed_distribution, cycle_tail
from srp.lattice import automorphism_group, build_cylinder, cycle_graph, grid_graph, path_graph
from srp.samplers import (ClosedChain, OpenChain, RngStream, SamplingStrategy, assembled_law_exact,
                          certify_open_chain, closed_kernel, decode_state, detailed_balance_residual,
                          empirical_law, encode_state, first_vertex_strategy, metropolis_step,
                          min_vertex_strategy, open_detailed_balance_residual, open_law,
                          phi_compatible_strategy, random_vertex_strategy, run_sampling_procedure,
                          sample_open, total_variation, verify_ergodicity, verify_open_ergodicity,
                          whole_set_strategy)
from srp.perm import GraphPermutation


def test_rng_streams_are_reproducible_and_distinct():
    a = RngStream(5, 1).generator().random(4)
    b = RngStream(5, 1).generator().random(4)
    c = RngStream(5, 2).generator().random(4)
    assert (a == b).all() and not (a == c).all()
    assert (RngStream(5, 1).child(3).generator().random(2) != a[:2]).all()


@given(st.lists(st.integers(0, 5), min_size=6, max_size=6))
def test_state_codes_roundtrip(img):
    assert decode_state(encode_state(img), 6) == tuple(img)


def test_kernel_rows_are_stochastic():
    g = grid_graph(2, 3)
    for img in closed_distribution(g, 1.0).support[:30]:
        row = closed_kernel(g, 1.0, img)
        assert math.isclose(sum(row.values()), 1.0, rel_tol=1e-12)
        assert all(p >= 0 for p in row.values())


@pytest.mark.parametrize("g", [grid_graph(2, 2), grid_graph(2, 3), cycle_graph(5), path_graph(4)],
                         ids=["2x2", "2x3", "C5", "P4"])
def test_detailed_balance_and_ergodicity(g):
    assert detailed_balance_residual(g, 1.3) < 1e-15
    assert verify_ergodicity(g, 1.3)


def test_edge_moves_alone_miss_some_states():
    # edge 2-changes never reach the two 4-cycles of the square from the identity
    cert = verify_ergodicity(grid_graph(2, 2), 1.0, move_set="edge")
    assert not cert.connected
    assert (cert.n_states, cert.reached) == (9, 7)
    assert verify_ergodicity(grid_graph(2, 2), 1.0, move_set="extended").connected


def test_open_chain_balance_and_ergodicity():
    lat = build_cylinder(2, width=3)
    g = lat.graph
    sinks = lat.hyperplane(2)
    assert open_detailed_balance_residual(g, range(g.n), lat.origin, sinks, 0.7) < 1e-15
    assert verify_open_ergodicity(g, range(g.n), lat.origin, sinks).connected


def test_closed_chain_matches_exact_tail():
    g = grid_graph(3, 3)
    alpha = 1.0
    res = ClosedChain(g, alpha, RngStream(2, 0).generator()).run(40_000, 1, 100, z=4, codes=False)
    exact = cycle_tail(g, 4, alpha)
    for ell in (0, 2, 4):
        p = float((res.zlen > ell).mean())
        # generous band for correlated samples
        assert abs(p - exact.tail(ell)) < 0.02


def test_chain_energies_are_consistent():
    g = grid_graph(2, 3)
    res = ClosedChain(g, 0.5, RngStream(1, 0).generator()).run(200, 1, 10, codes=True)
    for code, h in zip(res.codes, res.energies):
        img = decode_state(int(code), g.n)
        assert sum(1 for x, y in enumerate(img) if x != y) == h
        GraphPermutation(g, img)
    assert 0 < res.acceptance <= 1


def test_metropolis_step_keeps_validity():
    g = grid_graph(3, 3)
    p = GraphPermutation.identity(g)
    gen = np.random.default_rng(0)
    for _ in range(200):
        p = metropolis_step(p, 0.5, gen, move_set="extended")
    assert p.graph is g


def test_empirical_law_and_tv():
    assert total_variation({(0,): 1.0}, {(0,): 0.5, (1,): 0.5}) == 0.5
    law = empirical_law(np.array([0, 0, 1, 1]), 2)
    assert math.isclose(sum(law.values()), 1.0)


def test_open_chain_tv_small():
    lat = build_cylinder(2, width=2)
    g = lat.graph
    sinks = lat.hyperplane(2)
    res = OpenChain(g, range(g.n), lat.origin, sinks, 1.0, RngStream(4, 0).generator()).run(
        1_000_000, 1, 100, codes=True)
    emp = empirical_law(res.codes, g.n)
    exact = {k[0]: v for k, v in open_law(g, range(g.n), lat.origin, sinks, 1.0).items()}
    assert total_variation(emp, exact) < 0.02


def test_sample_open_exact_and_guarded():
    lat = build_cylinder(2, width=2)
    g = lat.graph
    cs = sample_open(g, range(g.n), lat.origin, lat.hyperplane(2), 1.0, 0, samples=20)
    for c in cs:
        c.validate()
    big = build_cylinder(10, width=6)
    with pytest.raises(InvariantViolation):
        sample_open(big.graph, range(big.graph.n), big.origin, big.hyperplane(10), 1.0, 0,
                    exact_cap=10)
    assert certify_open_chain(g, range(g.n), lat.origin, lat.hyperplane(2))


@pytest.mark.parametrize("g", [path_graph(4), cycle_graph(5), grid_graph(2, 3)], ids=["P4", "C5", "2x3"])
def test_assembled_law_is_the_gibbs_law(g):
    target = closed_distribution(g, 0.9).as_dict()
    for strat in (whole_set_strategy(), first_vertex_strategy(), min_vertex_strategy(),
                  phi_compatible_strategy(automorphism_group(g), [0])):
        law = assembled_law_exact(g, strat, 0.9)
        keys = set(law) | set(target)
        assert max(abs(law.get(k, 0) - target.get(k, 0)) for k in keys) < 1e-12


def test_random_strategy_needs_sampling():
    with pytest.raises(StrategyContractError):
        assembled_law_exact(path_graph(3), random_vertex_strategy(), 1.0)


def test_strategy_contract():
    bad = SamplingStrategy("empty", lambda B, h, r: set())
    with pytest.raises(StrategyContractError):
        bad.choose(frozenset({1}), ())
    outside = SamplingStrategy("outside", lambda B, h, r: {99})
    with pytest.raises(StrategyContractError):
        outside.choose(frozenset({1}), ())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_sampling_procedure_trace_is_consistent(seed):
    g = grid_graph(2, 3)
    tr = run_sampling_procedure(g, random_vertex_strategy(), 1.0, RngStream(seed))
    tr.check()
    assert sorted(x for r in tr.rounds for x in r.D) == list(range(g.n))


def test_sampling_procedure_with_mcmc_subsampler():
    tr = run_sampling_procedure(grid_graph(2, 2), min_vertex_strategy(), 1.0, RngStream(3), subsampler="mcmc")
    tr.check()
