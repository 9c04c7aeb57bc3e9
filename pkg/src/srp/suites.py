"""Verification suites over a fixed matrix of small graphs.

Each suite returns a :class:`~srp.report.SuiteReport`; ``run_suite`` looks one
up by its registered name.
"""
from __future__ import annotations

from itertools import combinations
from typing import Callable

import numpy as np

from srp.branching import check_orbit_domination, fit_cycle_bound
from srp.decay import (check_spatial_markov, finite_graph_constants, partition_ratio_matrix,
                       verify_boundary_decay, verify_removal_bound, verify_single_point_bound)
from srp.errors import UnverifiedHypothesis
from srp.exact import closed_distribution, count_closed, enumerate_closed, enumerate_open
from srp.lattice import (Graph, automorphism_group, build_cylinder, complete_graph, cycle_graph,
                         grid_graph, path_graph)
from srp.perm import OpenCycleConfig
from srp.regeneration import (_RegenCache, brute_force_regeneration_set, check_open_markov, log_scale,
                              numbregpoint_suite, pre_regeneration_points, regeneration_set,
                              satisfies_r1_r4)
from srp.report import CheckResult, SuiteReport, Timer
from srp.samplers import (assembled_law_exact, first_vertex_strategy, min_vertex_strategy,
                          phi_compatible_strategy, whole_set_strategy)

ALPHAS = (0.5, 1.0, 2.0)


def graph_matrix() -> dict[str, Graph]:
    """The fixed small-instance matrix: complete graphs, paths, cycles, grids and cylinders."""
    return {
        "K2": complete_graph(2),
        "P3": path_graph(3),
        "P5": path_graph(5),
        "C5": cycle_graph(5),
        "K4": complete_graph(4),
        "grid2x2": grid_graph(2, 2),
        "grid2x3": grid_graph(2, 3),
        "cyl3x2": build_cylinder(2, width=2).graph,
        "grid2x4": grid_graph(2, 4),
        "P8": path_graph(8),
        "C8": cycle_graph(8),
        "grid3x3": grid_graph(3, 3),
        "cyl3x3": build_cylinder(2, width=3).graph,
    }


def _small(max_n: int) -> dict[str, Graph]:
    return {k: g for k, g in graph_matrix().items() if g.n <= max_n}


def _named(report: SuiteReport, name: str, sub: SuiteReport) -> None:
    for r in sub.results:
        r.params = dict(r.params, graph=name)
    report.extend(sub.results)


def enumeration_suite(max_n: int = 9) -> SuiteReport:
    """``|S_V|`` by direct enumeration against the cycle recursion."""
    report = SuiteReport("enumeration")
    with Timer() as t:
        for name, g in _small(max_n).items():
            a = sum(1 for _ in enumerate_closed(g))
            b = count_closed(g)
            report.results.append(CheckResult("count", {"graph": name, "n": g.n}, a, b, -abs(a - b), a == b))
    report.seconds = t.seconds
    return report


def markov_suite(max_n: int = 8, alpha: float = 1.0, tol: float = 1e-9) -> SuiteReport:
    report = SuiteReport("markov")
    with Timer() as t:
        for name, g in _small(max_n).items():
            _named(report, name, check_spatial_markov(g, alpha, tol=tol))
    report.seconds = t.seconds
    return report


def sampling_lemma_suite(max_n: int = 6, alpha: float = 1.0, tol: float = 1e-9) -> SuiteReport:
    """Exact law of the assembled permutation against ``P_V`` for several strategies."""
    report = SuiteReport("sampling-lemma")
    with Timer() as t:
        for name, g in _small(max_n).items():
            exact = closed_distribution(g, alpha)
            target = dict(zip(exact.support, exact.probabilities))
            strategies = [whole_set_strategy(), first_vertex_strategy(), min_vertex_strategy(),
                          phi_compatible_strategy(automorphism_group(g), [0])]
            for strat in strategies:
                law = assembled_law_exact(g, strat, alpha)
                keys = set(law) | set(target)
                err = max(abs(law.get(k, 0.0) - target.get(k, 0.0)) for k in keys)
                report.results.append(CheckResult("assembled-law", {"graph": name, "strategy": strat.name,
                                                                    "alpha": alpha, "states": len(keys)},
                                                  err, 0.0, tol - err, err <= tol))
    report.seconds = t.seconds
    return report


def removal_bound_suite(alphas=ALPHAS) -> SuiteReport:
    report = SuiteReport("removal-bound")
    with Timer() as t:
        for name, g in graph_matrix().items():
            for a in alphas:
                r = verify_removal_bound(g, a)
                r.params = dict(r.params, graph=name)
                report.results.append(r)
    report.seconds = t.seconds
    return report


def single_point_suite(alphas=ALPHAS) -> SuiteReport:
    report = SuiteReport("single-point-bound")
    with Timer() as t:
        for name, g in graph_matrix().items():
            for a in alphas:
                r = verify_single_point_bound(g, a)
                r.params = dict(r.params, graph=name)
                report.results.append(r)
    report.seconds = t.seconds
    return report


def orbit_domination_suite(alphas=ALPHAS, max_A: int = 2) -> SuiteReport:
    report = SuiteReport("orbit-dom")
    with Timer() as t:
        for name, g in graph_matrix().items():
            for a in alphas:
                bound = fit_cycle_bound([g], a)
                for k in range(1, max_A + 1):
                    for A in combinations(range(g.n), k):
                        r = check_orbit_domination(g, A, a, bound)
                        r.params = dict(r.params, graph=name)
                        report.results.append(r)
    report.seconds = t.seconds
    return report


def partition_ratio_suite(alphas=ALPHAS) -> SuiteReport:
    """Partition-ratio bounds wherever the tail constants are certified; skipped elsewhere."""
    report = SuiteReport("partition-ratio")
    with Timer() as t:
        for name, g in graph_matrix().items():
            for a in alphas:
                b = finite_graph_constants(g, a)
                if not b.hypothesis_ok:
                    report.results.append(CheckResult.skip("partition-ratio", {"graph": name, "alpha": a},
                                                           "tail constants not certified"))
                    continue
                _named(report, name, partition_ratio_matrix(g, a, b))
    report.seconds = t.seconds
    return report


def boundary_suite(alphas=ALPHAS, max_n: int = 6) -> SuiteReport:
    """Boundary decay with ``U = V`` minus the last vertex and ``B = {0}``."""
    report = SuiteReport("boundary")
    with Timer() as t:
        for name, g in _small(max_n).items():
            if g.n < 3:
                continue
            U = range(g.n - 1)
            for a in alphas:
                try:
                    sub = verify_boundary_decay(g, U, [0], a)
                except UnverifiedHypothesis as e:
                    report.results.append(CheckResult.skip("boundary", {"graph": name, "alpha": a}, str(e)))
                    continue
                _named(report, name, sub)
    report.seconds = t.seconds
    return report


def numbregpoint_exhaustive() -> SuiteReport:
    return numbregpoint_suite(build_cylinder(9, width=6), 6, (0.1, 0.2))


def regen_maximality_suite(shapes=((2, 3), (3, 3), (3, 4)), per_shape: int = 40,
                           seed: int = 0) -> SuiteReport:
    """Closure-based regeneration sets against the exhaustive union of (R1)-(R4) sets."""
    report = SuiteReport("regen-maximality")
    gen = np.random.default_rng(seed)
    with Timer() as t:
        for n, w in shapes:
            lat = build_cylinder(n, width=w)
            g = lat.graph
            states = list(enumerate_open(g, range(g.n), lat.origin, lat.hyperplane(n)))
            picks = gen.choice(len(states), size=min(per_shape, len(states)), replace=False)
            for i in sorted(picks.tolist()):
                img, _, z = states[i]
                c = OpenCycleConfig(g, img, range(g.n), lat.origin, z)
                cache = _RegenCache(c, lat, log_scale(lat.n))
                for x in pre_regeneration_points(c, lat):
                    R = regeneration_set(c, lat, x)
                    brute = brute_force_regeneration_set(c, lat, x)
                    fast = cache.regen(x)
                    props = satisfies_r1_r4(c, lat, x, R) if R is not None else (True,) * 4
                    ok = R == brute == fast and all(props)
                    params = {"shape": [n + 1, w], "config": i, "x": x,
                              "size": None if R is None else len(R)}
                    report.results.append(CheckResult("regen-maximality", params,
                                                      None if R is None else len(R),
                                                      None if brute is None else len(brute),
                                                      0.0 if ok else -1.0, ok))
    report.seconds = t.seconds
    return report


def open_markov_suite(alpha: float = 1.0) -> SuiteReport:
    report = SuiteReport("open-markov")
    with Timer() as t:
        report.extend(check_open_markov(build_cylinder(2, width=2), alpha).results)
        report.extend(check_open_markov(build_cylinder(2, width=3), alpha).results)
    report.seconds = t.seconds
    return report


SUITES: dict[str, Callable[[], SuiteReport]] = {
    "enumeration": enumeration_suite,
    "markov": markov_suite,
    "sampling-lemma": sampling_lemma_suite,
    "removal-bound": removal_bound_suite,
    "single-point-bound": single_point_suite,
    "boundary": boundary_suite,
    "orbit-dom": orbit_domination_suite,
    "partition-ratio": partition_ratio_suite,
    "numbregpoint": numbregpoint_exhaustive,
    "regen-maximality": regen_maximality_suite,
    "open-markov": open_markov_suite,
}


def run_suite(name: str) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name]()
