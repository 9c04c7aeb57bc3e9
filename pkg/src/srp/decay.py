"""Markov properties, invariant-set closures and the decay constants.

The checks here are exact: partition functions are integer polynomials in
``q = exp(-alpha)`` (see :mod:`srp.exact`) and inequalities are evaluated at
50 significant digits. Identities between expectations are checked in double
precision over the fully enumerated ensemble.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np

from srp.branching import (CycleLengthBound, GWProcess, TailFit, fit_cycle_bound,
                           fit_tail_constants, total_population_tail)
from srp.errors import InfeasibleParameters, StrategyContractError, UnverifiedHypothesis
from srp.exact import (DEFAULT_ENUM_CAP, CycleCounter, SawCensus, census_max_over,
                       directed_cycles_through, enumerate_closed, from_mask, to_mask)
from srp.lattice import Graph, SymmetryGroup, distances_from, doubled_graph
from srp.report import CheckResult, SuiteReport

DPS = 50
TIE = mpmath.mpf(10) ** -(DPS - 10)


# ---------------------------------------------------------------------------
# alpha_0 and the constants of the cycle-length bound

def _f(alpha: float) -> float:
    """``alpha + log(1 + e^{-2 alpha}) / 2``, overflow-safe."""
    return 0.5 * np.logaddexp(2.0 * alpha, 0.0)


def solve_alpha0(log_mu: float, tol: float = 1e-12) -> float:
    """Root of ``alpha + log(1 + e^{-2 alpha}) / 2 = log_mu`` by bisection."""
    if not log_mu > 0 or not math.isfinite(log_mu):
        raise ValueError("log_mu must be a positive finite number")
    lo, hi = -1.0, max(1.0, log_mu)
    while _f(lo) > log_mu:
        lo *= 2
    while _f(hi) < log_mu:
        hi *= 2
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if _f(mid) == log_mu:
            return mid
        if _f(mid) < log_mu:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    # lo keeps f(lo) < log_mu, hence lo < log_mu even when the gap is below one ulp
    if abs(_f(lo) - log_mu) >= tol:
        raise ArithmeticError(f"bisection residual {abs(_f(lo) - log_mu)}")
    return lo


@dataclass
class ConstantsBundle:
    """``c0``, ``C0``, ``c1`` and the branching constants ``(C_gw, kappa)``.

    ``kappa`` is the half-rate: the GW tail satisfies ``P(W > n) <= C_gw e^{-2 kappa n}``.
    """

    alpha: float
    log_mu: float
    delta: float
    log_mu_delta: float
    alpha0: float
    C_delta: float
    c0: float
    c1: float
    C0: float
    C_gw: float = math.nan
    kappa: float = math.nan
    hypothesis_ok: bool = False
    notes: dict = field(default_factory=dict)

    def overlay(self, ell: int) -> float:
        """``C0 exp(-c0 ell)``, the tail bound for ``P(||gamma_x|| > ell)``."""
        return self.C0 * math.exp(-self.c0 * ell)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v)) for k, v in d.items()}


def c_delta_from_census(census: SawCensus, log_mu_delta: float) -> float:
    """``max_n |SAP_n| / (mu + delta)^n`` over the census range."""
    return max(math.exp(math.log(c) - n * log_mu_delta) for n, c in enumerate(census.sap) if c > 0)


def _c1(alpha: float, C_delta: float, c0: float) -> float:
    return 1.0 / (1.0 + (1.0 + math.exp(-2 * alpha)) * C_delta * math.exp(-2 * c0) / (1.0 - math.exp(-c0)))


def constants_bundle(alpha: float, log_mu: float, delta: float | None = None,
                     census: SawCensus | None = None, C_gw: float = math.nan,
                     kappa: float = math.nan) -> ConstantsBundle:
    """Evaluate ``c0``, ``C_delta``, ``C0`` and ``c1`` for a lattice with cyclic connective constant ``exp(log_mu)``.

    By default ``delta`` is chosen so that ``c0 = (alpha - alpha0) / 2``. The
    census gives ``C_delta`` only over its range, so it is a lower estimate of
    the true constant. Without a census ``C_delta = 1``.
    """
    alpha0 = solve_alpha0(log_mu)
    if alpha <= alpha0:
        raise InfeasibleParameters(f"alpha = {alpha} is not above alpha0 = {alpha0:.6f}")
    f = float(_f(alpha))
    mu = math.exp(log_mu)
    if delta is None:
        delta = math.exp(f - 0.5 * (alpha - alpha0)) - mu
        if delta <= 0:
            delta = math.exp(0.5 * (f + log_mu)) - mu
    if delta <= 0:
        raise InfeasibleParameters("delta must be positive")
    lmd = math.log(mu + delta)
    c0 = f - lmd
    if c0 <= 0:
        raise InfeasibleParameters(f"c0 = {c0} <= 0 for delta = {delta}")
    C_delta = 1.0 if census is None else c_delta_from_census(census, lmd)
    return ConstantsBundle(alpha, log_mu, delta, lmd, alpha0, C_delta, c0,
                           _c1(alpha, C_delta, c0), C_delta / (1.0 - math.exp(-c0)),
                           C_gw, kappa, False,
                           {"census_n_max": None if census is None else census.n_max})


def decay_constants(g: Graph, alpha: float, ell_max: int = 200) -> tuple[CycleLengthBound, TailFit]:
    """Cycle-length bound over every subset of ``g`` and the fitted GW tail constants.

    The fit is marked certified when the bound is exhaustive, ``E xi < 2``, and
    the GW process with offspring ``xi - 1`` is subcritical.
    """
    bound = fit_cycle_bound([g], alpha)
    off = bound.offspring(1)
    law = total_population_tail(GWProcess(off, 1), ell_max)
    rate = off.cramer_rate()
    fit = fit_tail_constants(law, rate=rate if rate > 0 else 1.0)
    fit.certified = bool(bound.certified and bound.mean < 2 and rate > 0)
    return bound, fit


def finite_graph_constants(g: Graph, alpha: float, with_decay: bool = True) -> ConstantsBundle:
    """Constants valid on the finite graph ``g`` itself.

    ``log(mu + delta)`` is set to ``f(alpha) / 2`` so that ``c0 = f(alpha) / 2``,
    and ``C_delta`` comes from the exhaustive rooted polygon census of ``g``
    (all origins, all lengths), which makes ``|SAP_n(x)| <= C_delta (mu+delta)^n``
    hold exactly for every ``x`` and ``n``.
    """
    f = float(_f(alpha))
    lmd = 0.5 * f
    census = census_max_over(g, range(g.n), g.n)
    C_delta = c_delta_from_census(census, lmd)
    c0 = f - lmd
    b = ConstantsBundle(alpha, -math.inf, math.exp(lmd), lmd, -math.inf, C_delta, c0,
                        _c1(alpha, C_delta, c0), C_delta / (1.0 - math.exp(-c0)),
                        notes={"census_n_max": g.n, "graph": g.digest()})
    if with_decay:
        bound, fit = decay_constants(g, alpha)
        b.C_gw, b.kappa, b.hypothesis_ok = fit.C, fit.kappa, fit.certified
        b.notes["E_xi"] = bound.mean
    return b


# ---------------------------------------------------------------------------
# exact ensembles and the functional library

@dataclass(frozen=True)
class Functional:
    """``fixed``: 1{pi(x)=x}; ``image``: 1{pi(x)=y}; ``preimage``: 1{pi^-1(x)=y}; ``cycle``: 1{||gamma_x||=k}."""

    kind: str
    x: int
    arg: int = -1

    @property
    def name(self) -> str:
        return f"{self.kind}({self.x}{'' if self.arg < 0 else ',' + str(self.arg)})"

    def evaluate(self, ens: "Ensemble") -> np.ndarray:
        if self.kind == "fixed":
            return (ens.images[:, self.x] == self.x).astype(float)
        if self.kind == "image":
            return (ens.images[:, self.x] == self.arg).astype(float)
        if self.kind == "preimage":
            return (ens.pres[:, self.x] == self.arg).astype(float)
        if self.kind == "cycle":
            return (ens.clen[:, self.x] == self.arg).astype(float)
        raise ValueError(self.kind)


CYCLE_LENGTHS = (0, 2, 3, 4)


def functional_library(g: Graph, S: Iterable[int], with_cycles: bool = True) -> list[Functional]:
    """The fixed test library on ``S``; without cycle indicators every member is ``F_S``-measurable."""
    out = []
    for x in sorted(set(S)):
        out.append(Functional("fixed", x))
        for y in g.neighbors(x):
            out.append(Functional("image", x, y))
            out.append(Functional("preimage", x, y))
        if with_cycles:
            out.extend(Functional("cycle", x, k) for k in CYCLE_LENGTHS)
    return out


class Ensemble:
    """All configurations of ``S_U`` (``U = domain``, identity outside) with their probabilities."""

    def __init__(self, g: Graph, alpha: float, domain: Iterable[int] | None = None,
                 cap: int = DEFAULT_ENUM_CAP):
        rows, hs = [], []
        for img, h in enumerate_closed(g, domain, cap):
            rows.append(img)
            hs.append(h)
        self.images = np.array(rows, dtype=np.int64).reshape(len(rows), g.n)
        e = -alpha * np.array(hs, dtype=float)
        w = np.exp(e - e.max())
        self.probs = w / w.sum()
        n = g.n
        self.pres = np.empty_like(self.images)
        rows_idx = np.arange(len(rows))[:, None]
        self.pres[rows_idx, self.images] = np.arange(n)[None, :]
        self.clen = np.zeros_like(self.images)
        for i, img in enumerate(rows):
            done = [False] * n
            for x in range(n):
                if done[x]:
                    continue
                cyc = [x]
                y = img[x]
                while y != x:
                    cyc.append(y)
                    y = img[y]
                k = 0 if len(cyc) == 1 else len(cyc)
                for v in cyc:
                    done[v] = True
                    self.clen[i, v] = k

    def __len__(self) -> int:
        return len(self.probs)

    def expect(self, fs: Sequence[Functional]) -> np.ndarray:
        if not fs:
            return np.zeros(0)
        return np.array([f.evaluate(self) @ self.probs for f in fs])

    def matrix(self, fs: Sequence[Functional]) -> np.ndarray:
        if not fs:
            return np.zeros((len(self), 0))
        return np.column_stack([f.evaluate(self) for f in fs])


class ExactZ:
    """``Z(U)`` of induced subsets at 50 digits, memoised by bitmask."""

    def __init__(self, g: Graph, alpha: float):
        self.g = g
        self.cc = CycleCounter(g)
        with mpmath.workdps(DPS):
            self.q = mpmath.exp(-mpmath.mpf(alpha))
        self._memo: dict[int, mpmath.mpf] = {}

    def __call__(self, mask: int):
        if mask not in self._memo:
            with mpmath.workdps(DPS):
                v = mpmath.mpf(0)
                for c in reversed(self.cc.poly(mask)):
                    v = v * self.q + c
                self._memo[mask] = v
        return self._memo[mask]

    def log(self, mask: int) -> float:
        return float(mpmath.log(self(mask)))


# ---------------------------------------------------------------------------
# spatial Markov property

def check_spatial_markov(g: Graph, alpha: float, subsets: Iterable[Iterable[int]] | None = None,
                         tol: float = 1e-9, cap: int = DEFAULT_ENUM_CAP) -> SuiteReport:
    """Items (i)-(iv) of the spatial Markov property for each subset (default: all ``2^n``).

    (i) ``P(A in Inv) = Z(A) Z(A^c) / Z(V)``; (ii) ``E(f | Inv) = E_A(f)``;
    (iii) ``E(f g | Inv) = E_A(f) E_{A^c}(g)``; (iv) ``E(f | Inv, B) = E_A(f)`` for
    indicator events ``B`` of the library on ``A^c`` with positive probability.
    """
    ens = Ensemble(g, alpha, None, cap)
    ez = ExactZ(g, alpha)
    V = (1 << g.n) - 1
    logzv = ez.log(V)
    sub_ens: dict[int, tuple] = {}

    def local(mask):
        if mask not in sub_ens:
            e = Ensemble(g, alpha, from_mask(mask), cap)
            sub_ens[mask] = e
        return sub_ens[mask]

    masks = range(1 << g.n) if subsets is None else [to_mask(s) for s in subsets]
    report = SuiteReport(f"spatial-markov(n={g.n},alpha={alpha})")
    for m in masks:
        A, Ac = from_mask(m), from_mask(V & ~m)
        inA = np.zeros(g.n, dtype=bool)
        inA[A] = True
        inv = inA[ens.images[:, A]].all(axis=1) if A else np.ones(len(ens), dtype=bool)
        wi = ens.probs * inv
        p_inv = wi.sum()
        rhs_i = math.exp(ez.log(m) + ez.log(V & ~m) - logzv)
        params = {"A": A, "alpha": alpha}
        report.results.append(CheckResult("markov-i", params, p_inv, rhs_i, tol - abs(p_inv - rhs_i),
                                          abs(p_inv - rhs_i) <= tol))
        fA = functional_library(g, A)
        gA = functional_library(g, Ac)
        F, G = ens.matrix(fA), ens.matrix(gA)
        eA = local(m).expect(fA)
        eAc = local(V & ~m).expect(gA)
        lhs_ii = F.T @ wi / p_inv
        err = float(np.max(np.abs(lhs_ii - eA))) if len(fA) else 0.0
        report.results.append(CheckResult("markov-ii", params, _worst(lhs_ii, eA), None,
                                          tol - err, err <= tol))
        M = (F * wi[:, None]).T @ G / p_inv
        lhs_g = G.T @ wi / p_inv
        err3 = 0.0
        if len(fA) and len(gA):
            err3 = max(float(np.max(np.abs(M - np.outer(eA, eAc)))),
                       float(np.max(np.abs(M - np.outer(lhs_ii, lhs_g)))))
        report.results.append(CheckResult("markov-iii", params, err3, 0.0, tol - err3, err3 <= tol))
        err4, used = 0.0, 0
        support = (G * inv[:, None]).any(axis=0) if len(gA) else np.zeros(0, dtype=bool)
        for j in np.flatnonzero(support):
            cond = M[:, j] / lhs_g[j]
            if len(fA):
                err4 = max(err4, float(np.max(np.abs(cond - eA))))
            used += 1
        report.results.append(CheckResult("markov-iv", dict(params, events=used), err4, 0.0,
                                          tol - err4, err4 <= tol))
    return report


def _worst(a: np.ndarray, b: np.ndarray):
    if not len(a):
        return None
    i = int(np.argmax(np.abs(a - b)))
    return [float(a[i]), float(b[i])]


# ---------------------------------------------------------------------------
# invariant sets and the strong Markov property

class Probe:
    """Read access to ``pi`` that records every queried point."""

    def __init__(self, image: Sequence[int], preimage: Sequence[int] | None = None):
        self._img = tuple(int(v) for v in image)
        if preimage is None:
            pre = [0] * len(self._img)
            for x, y in enumerate(self._img):
                pre[y] = x
            preimage = pre
        self._pre = tuple(int(v) for v in preimage)
        self.queried: set[int] = set()

    def __len__(self) -> int:
        return len(self._img)

    def image(self, x: int) -> int:
        self.queried.add(x)
        return self._img[x]

    def preimage(self, x: int) -> int:
        self.queried.add(x)
        return self._pre[x]


def _accessors(p):
    if isinstance(p, Probe):
        return p.image, p.preimage
    img = tuple(p.image) if hasattr(p, "image") else tuple(p)
    pre = [0] * len(img)
    for x, y in enumerate(img):
        pre[y] = x
    return img.__getitem__, pre.__getitem__


def minimal_invariant_closure(p, Phi: SymmetryGroup | Iterable[Sequence[int]] | None,
                              A: Iterable[int]) -> frozenset[int]:
    """Least ``S`` containing ``A`` with ``pi(S) = S`` and ``phi(S) = S`` for every ``phi``.

    ``p`` is a permutation, an image tuple or a :class:`Probe`; only points of
    the result are ever queried.
    """
    img, pre = _accessors(p)
    maps = [] if Phi is None else [tuple(phi) for phi in Phi]
    S = set(A)
    stack = list(S)
    while stack:
        x = stack.pop()
        nxt = [img(x), pre(x)] + [phi[x] for phi in maps]
        for y in nxt:
            if y not in S:
                S.add(y)
                stack.append(y)
    return frozenset(S)


@dataclass
class InvariantSetReport:
    set: frozenset
    is_pi_invariant: bool
    is_phi_compatible: bool
    contains_target: bool
    separated_from: frozenset | None = None


def invariant_set_report(p, Phi, S: Iterable[int], target: Iterable[int],
                         B: Iterable[int] | None = None) -> InvariantSetReport:
    img, _ = _accessors(p)
    S = frozenset(S)
    maps = [] if Phi is None else [tuple(phi) for phi in Phi]
    inv = frozenset(img(x) for x in S) == S
    comp = all(frozenset(phi[x] for x in S) == S for phi in maps)
    cont = frozenset(target) <= S
    sep = None
    if B is not None and cont and not (S & frozenset(B)):
        sep = frozenset(B)
    return InvariantSetReport(S, inv, comp, cont, sep)


QBuilder = Callable[[Probe], Iterable[int]]


def constant_builder(S: Iterable[int]) -> QBuilder:
    S = frozenset(S)
    return lambda probe: S


def orbit_builder(x0: int) -> QBuilder:
    """``Q`` = the cycle through ``x0``."""
    def build(probe):
        out = [x0]
        y = probe.image(x0)
        while y != x0:
            out.append(y)
            y = probe.image(y)
        return out
    return build


def closure_builder(Phi, A: Iterable[int]) -> QBuilder:
    A = frozenset(A)
    return lambda probe: minimal_invariant_closure(probe, Phi, A)


def run_builder(builder: QBuilder, image: Sequence[int]) -> frozenset[int]:
    """Evaluate ``Q(pi)`` and enforce admissibility: invariant, and queried points inside ``Q``."""
    probe = Probe(image)
    Q = frozenset(builder(probe))
    if frozenset(image[x] for x in Q) != Q:
        raise StrategyContractError(f"Q = {sorted(Q)} is not invariant")
    if not probe.queried <= Q:
        raise StrategyContractError(
            f"builder looked at {sorted(probe.queried - Q)} outside Q = {sorted(Q)}")
    return Q


def check_strong_markov(g: Graph, alpha: float, builder: QBuilder, B: Iterable[int],
                        tol: float = 1e-9, cap: int = DEFAULT_ENUM_CAP) -> SuiteReport:
    """``E(f 1{Q cap B = 0} | F_Q) = E_{Q^c}(f) 1{Q cap B = 0}`` on every atom ``{Q = A, pi|_A}``.

    ``f`` ranges over the ``F_B``-measurable part of the library. Atoms meeting
    ``B`` contribute zero on both sides and are counted only. The identity is
    also checked after summing over the ensemble.
    """
    B = frozenset(B)
    ens = Ensemble(g, alpha, None, cap)
    fs = functional_library(g, B, with_cycles=False)
    F = ens.matrix(fs)
    atoms: dict[tuple, list[int]] = {}
    for i, img in enumerate(ens.images.tolist()):
        Q = run_builder(builder, img)
        key = (Q, tuple(img[x] for x in sorted(Q)))
        atoms.setdefault(key, []).append(i)
    comp: dict[frozenset, np.ndarray] = {}
    V = frozenset(range(g.n))
    report = SuiteReport(f"strong-markov(n={g.n},alpha={alpha})")
    total_lhs = np.zeros(len(fs))
    total_rhs = np.zeros(len(fs))
    worst, n_sep, n_meet = 0.0, 0, 0
    for (Q, _), idx in atoms.items():
        if Q & B:
            n_meet += 1
            continue
        n_sep += 1
        idx = np.array(idx)
        w = ens.probs[idx]
        pa = w.sum()
        lhs = F[idx].T @ w / pa
        rest = V - Q
        if rest not in comp:
            comp[rest] = Ensemble(g, alpha, rest, cap).expect(fs)
        rhs = comp[rest]
        if len(fs):
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        total_lhs += lhs * pa
        total_rhs += rhs * pa
    err_tot = float(np.max(np.abs(total_lhs - total_rhs))) if len(fs) else 0.0
    params = {"B": sorted(B), "alpha": alpha, "atoms": len(atoms), "separating_atoms": n_sep,
              "meeting_atoms": n_meet}
    report.results.append(CheckResult("strong-markov-atoms", params, worst, 0.0, tol - worst, worst <= tol))
    report.results.append(CheckResult("strong-markov-total", params, total_lhs.tolist(), total_rhs.tolist(),
                                      tol - err_tot, err_tot <= tol))
    return report


# ---------------------------------------------------------------------------
# boundary decay

def _check_hypothesis(fit: TailFit, unsafe: bool) -> None:
    if not fit.certified and not unsafe:
        raise UnverifiedHypothesis("the GW tail constants (C, kappa) are not certified for this graph; "
                                   "pass unsafe=True to use them anyway")


def verify_boundary_decay(g: Graph, U: Iterable[int], B: Iterable[int], alpha: float,
                          fit: TailFit | None = None, unsafe: bool = False,
                          functionals: Sequence[Functional] | None = None,
                          cap: int = DEFAULT_ENUM_CAP) -> SuiteReport:
    """Exact ``|E_U f - E_V f|`` against the doubled-graph bound and the summed exponential bound.

    The doubled-graph bound is ``2 ||f|| P(Q_A cap B != 0 | pi|_A = id)`` with
    ``A`` the copy-1 points outside ``U``; the identity
    ``E_U f - E_V f = E((f_1 - f_2) 1{Q_A cap B != 0} | pi|_A = id)`` is checked too.
    The second bound is ``2 C ||f|| sum_{x in V-U} e^{-kappa d(x, B)}``.
    """
    U, B = frozenset(U), frozenset(B)
    if not B <= U:
        raise ValueError("B must lie inside U")
    if fit is None:
        _, fit = decay_constants(g, alpha)
    _check_hypothesis(fit, unsafe)
    n = g.n
    fs = list(functionals) if functionals is not None else functional_library(g, B, with_cycles=False)
    eV = Ensemble(g, alpha, None, cap)
    eU = Ensemble(g, alpha, U, cap)
    FU, FV = eU.matrix(fs), eV.matrix(fs)
    diff = FU.T @ eU.probs - FV.T @ eV.probs
    # doubled graph conditioned on pi|_A = id: independent pair (sigma_U on copy 1, sigma_V on copy 2)
    dg, swap = doubled_graph(g)
    A = [x for x in range(n) if x not in U]
    hit = np.zeros((len(eU), len(eV)), dtype=bool)
    for i, s1 in enumerate(eU.images.tolist()):
        for j, s2 in enumerate(eV.images.tolist()):
            img = s1 + [y + n for y in s2]
            Q = minimal_invariant_closure(img, swap, A)
            hit[i, j] = any(b in Q for b in B)
    W = np.outer(eU.probs, eV.probs)
    p_hit = float((W * hit).sum())
    ident = np.array([((FU[:, k][:, None] - FV[:, k][None, :]) * hit * W).sum() for k in range(len(fs))])
    d = distances_from(g, B)
    s = sum(math.exp(-fit.kappa * d[x]) for x in range(n) if x not in U and x in d)
    report = SuiteReport(f"boundary-decay(n={n},alpha={alpha})")
    base = {"U": sorted(U), "B": sorted(B), "alpha": alpha, "C": fit.C, "kappa": fit.kappa,
            "certified": fit.certified}
    for k, f in enumerate(fs):
        lhs = abs(float(diff[k]))
        r1 = 2.0 * p_hit
        r2 = 2.0 * fit.C * s
        e_id = abs(float(diff[k]) - float(ident[k]))
        p = dict(base, f=f.name)
        report.results.append(CheckResult("boundary-identity", p, float(diff[k]), float(ident[k]),
                                          1e-9 - e_id, e_id <= 1e-9))
        report.results.append(CheckResult("boundary-doubled", p, lhs, r1, r1 - lhs, lhs <= r1 + 1e-12))
        report.results.append(CheckResult("boundary-exponential", p, lhs, r2, r2 - lhs, lhs <= r2 + 1e-12))
    return report


def boundary_decay_sweep(g: Graph, U: Iterable[int], B: Iterable[int], alphas: Iterable[float],
                         f: Functional | None = None) -> list[tuple[float, float]]:
    """``(alpha, |E_U f - E_V f|)`` over a grid (diagnostic only)."""
    U, B = frozenset(U), frozenset(B)
    f = f or Functional("fixed", min(B))
    out = []
    for a in alphas:
        eV, eU = Ensemble(g, a), Ensemble(g, a, U)
        out.append((a, abs(float(f.evaluate(eU) @ eU.probs - f.evaluate(eV) @ eV.probs))))
    return out


# ---------------------------------------------------------------------------
# partition-function inequalities

def _le(a, b) -> tuple[bool, float]:
    """Exact comparison ``a <= b`` with a relative tie tolerance of ``1e-40``."""
    with mpmath.workdps(DPS):
        ok = a <= b + TIE * max(abs(a), abs(b), 1)
        return bool(ok), float(b - a)


def self_avoiding_sets(g: Graph, mask: int | None = None) -> dict[int, int]:
    """``{vertex mask: max ||gamma||}`` over self-avoiding paths and cycles inside ``mask``.

    Paths count edges (a single vertex is a path with 0 edges); cycles
    include the back-and-forth 2-cycles.
    """
    full = (1 << g.n) - 1 if mask is None else mask
    best: dict[int, int] = {}

    def put(m, k):
        if best.get(m, -1) < k:
            best[m] = k

    def rec(v, seen, k):
        put(seen, k)
        for w in g.adj[v]:
            if not (seen >> w) & 1 and (full >> w) & 1:
                rec(w, seen | (1 << w), k + 1)

    for x in from_mask(full):
        rec(x, 1 << x, 0)
        for k, cyc in directed_cycles_through(g, x, full):
            put(cyc, k)
    return best


def verify_removal_bound(g: Graph, alpha: float) -> CheckResult:
    """``Z(V - gamma) / Z(V) <= (1 + e^{-2 alpha})^{-||gamma||/2}`` for every self-avoiding path or cycle."""
    ez = ExactZ(g, alpha)
    V = (1 << g.n) - 1
    worst = (math.inf, None, None)
    count = 0
    with mpmath.workdps(DPS):
        base = 1 / (1 + ez.q ** 2)
        zv = ez(V)
        for m, k in self_avoiding_sets(g).items():
            lhs = ez(V & ~m) / zv
            rhs = base ** (mpmath.mpf(k) / 2)
            ok, marg = _le(lhs, rhs)
            count += 1
            if not ok or marg < worst[0]:
                worst = (marg if ok else -abs(marg), float(lhs), float(rhs))
                if not ok:
                    break
    return CheckResult("removal-bound", {"n": g.n, "alpha": alpha, "sets": count}, worst[1], worst[2],
                       worst[0], worst[0] >= 0 or worst[1] is None)


def verify_single_point_bound(g: Graph, alpha: float, constants: ConstantsBundle | None = None,
                  subsets: Iterable[Iterable[int]] | None = None) -> CheckResult:
    """Single-point bound behind ``c1``, for every ``U`` (default: all subsets) and ``x`` in ``U``.

    Checks ``Z(U)/Z(U - x) <= 1 + (1+q^2) sum_{n>=2} |SAP_n(x) cap U| q^n (1+q^2)^{-n/2}``
    and that this middle term is at most ``1/c1``.
    """
    b = constants or finite_graph_constants(g, alpha, with_decay=False)
    ez = ExactZ(g, alpha)
    masks = range(1, 1 << g.n) if subsets is None else [to_mask(s) for s in subsets]
    worst = math.inf
    wl = wr = None
    count = 0
    with mpmath.workdps(DPS):
        q = ez.q
        s = 1 + q ** 2
        inv_c1 = 1 / mpmath.mpf(b.c1)
        for U in masks:
            for x in from_mask(U):
                lhs = ez(U) / ez(U & ~(1 << x))
                mid = mpmath.mpf(1)
                for k, _ in directed_cycles_through(g, x, U):
                    mid += s * q ** k * s ** (-mpmath.mpf(k) / 2)
                ok1, m1 = _le(lhs, mid)
                ok2, m2 = _le(mid, inv_c1)
                count += 1
                m = min(m1 if ok1 else -abs(m1), m2 if ok2 else -abs(m2))
                if m < worst:
                    worst, wl, wr = m, float(lhs), [float(mid), float(inv_c1)]
    return CheckResult("single-point-bound", {"n": g.n, "alpha": alpha, "c1": b.c1, "pairs": count}, wl, wr,
                       worst, worst >= 0)


def verify_c1_bound(g: Graph, U: Iterable[int], A: Sequence[int], alpha: float,
                    constants: ConstantsBundle | None = None) -> SuiteReport:
    """``Z(U - A)/Z(U) >= c1^{|A|}``, with the telescoping product checked exactly en route."""
    b = constants or finite_graph_constants(g, alpha, with_decay=False)
    ez = ExactZ(g, alpha)
    U = to_mask(U)
    A = list(A)
    if to_mask(A) & ~U:
        raise ValueError("A must lie inside U")
    report = SuiteReport("c1-bound")
    with mpmath.workdps(DPS):
        lhs = ez(U & ~to_mask(A)) / ez(U)
        prod = mpmath.mpf(1)
        for i in range(len(A)):
            Ai = to_mask(A[i:])
            Ai1 = to_mask(A[i + 1:])
            prod *= ez(U & ~Ai) / ez(U & ~Ai1)
        tele = abs(prod - lhs) <= TIE * lhs
        rhs = mpmath.mpf(b.c1) ** len(A)
        ok, marg = _le(rhs, lhs)
    params = {"U": from_mask(U), "A": A, "alpha": alpha, "c1": b.c1}
    report.results.append(CheckResult("telescoping", params, float(prod), float(lhs), 0.0, bool(tele)))
    report.results.append(CheckResult("c1-bound", params, float(lhs), float(rhs), marg, ok))
    return report


def _pair_sum(g: Graph, A, Y, kappa: float) -> float:
    total = 0.0
    for x in A:
        d = distances_from(g, [x])
        total += sum(math.exp(-kappa * d[y]) for y in Y if y in d)
    return total


def verify_partition_ratio_bounds(g: Graph, V0: Iterable[int], V1: Iterable[int], A: Iterable[int],
                                  alpha: float, constants: ConstantsBundle,
                                  unsafe: bool = False) -> SuiteReport:
    """``Z(V0-A)/Z(V0)`` within a factor ``D`` of ``Z(V1-A)/Z(V1)``.

    ``D`` is built from the pairwise sum over ``A x (V0 - V1)``; a second, weaker
    check uses ``|A| |V0 - V1| e^{-kappa d(A, V0 - V1)}`` instead.
    """
    if not constants.hypothesis_ok and not unsafe:
        raise UnverifiedHypothesis("constants carry no certified (C, kappa); pass unsafe=True")
    V0, V1, A = frozenset(V0), frozenset(V1), frozenset(A)
    if not (A <= V1 <= V0):
        raise ValueError("need A inside V1 inside V0")
    Bset = V0 - V1
    ez = ExactZ(g, alpha)
    C, kappa, c1 = constants.C_gw, constants.kappa, constants.c1
    s = _pair_sum(g, A, Bset, kappa)
    if A and Bset:
        dAB = min(distances_from(g, A).get(y, math.inf) for y in Bset)
    else:
        dAB = math.inf
    s_cor = len(A) * len(Bset) * math.exp(-kappa * dAB) if math.isfinite(dAB) else 0.0
    report = SuiteReport("partition-ratio")
    params = {"V0": sorted(V0), "V1": sorted(V1), "A": sorted(A), "alpha": alpha,
              "C": C, "kappa": kappa, "c1": c1}
    with mpmath.workdps(DPS):
        m0, m1, mA = to_mask(V0), to_mask(V1), to_mask(A)
        r0 = ez(m0 & ~mA) / ez(m0)
        r1 = ez(m1 & ~mA) / ez(m1)
        for name, expo in (("partition-ratio", s), ("partition-ratio-distance", s_cor)):
            D = mpmath.exp(2 * mpmath.mpf(C) / mpmath.mpf(c1) * mpmath.mpf(expo))
            ok_lo, m_lo = _le(r1 / D, r0)
            ok_hi, m_hi = _le(r0, D * r1)
            report.results.append(CheckResult(name, dict(params, D=float(D)), float(r0),
                                              [float(r1 / D), float(D * r1)], min(m_lo, m_hi),
                                              ok_lo and ok_hi))
    return report


# ---------------------------------------------------------------------------
# suites over a graph matrix

def partition_ratio_matrix(g: Graph, alpha: float, constants: ConstantsBundle | None = None,
                  max_removed: int = 2, max_A: int = 2, unsafe: bool = False) -> SuiteReport:
    """Partition-ratio bounds (summed and distance forms) for ``V0 = V``, every ``V1`` missing at most ``max_removed``
    points and every ``A`` inside ``V1`` with at most ``max_A`` points."""
    b = constants or finite_graph_constants(g, alpha)
    report = SuiteReport(f"partition-ratio(n={g.n},alpha={alpha})")
    V = frozenset(range(g.n))
    for r in range(0, max_removed + 1):
        for removed in combinations(range(g.n), r):
            V1 = V - frozenset(removed)
            for k in range(0, max_A + 1):
                for A in combinations(sorted(V1), k):
                    report.extend(verify_partition_ratio_bounds(g, V, V1, A, alpha, b, unsafe).results)
    return report
