"""Galton-Watson processes, total-population laws and stochastic-domination harnesses.

The exact law of the total population ``W`` uses the random-walk
representation: with ``Z_0`` founders and offspring ``X_i``, ``W`` is the
first time the walk ``Z_0 + sum_{i<=n} (X_i - 1)`` hits zero, and the hitting
time theorem gives ``P(W = n) = (Z_0 / n) P(X_1 + ... + X_n = n - Z_0)``.
Probabilities may be floats or ``Fraction``s; the arithmetic is generic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from srp.errors import InfeasibleParameters
from srp.exact import CycleCounter, directed_cycles_through, from_mask, to_mask
from srp.lattice import Graph
from srp.report import CheckResult

DEFAULT_POP_CAP = 10**6


# ---------------------------------------------------------------------------
# offspring laws

@dataclass(frozen=True)
class OffspringLaw:
    """pmf over ``0, 1, ..., len(pmf) - 1``."""

    pmf: tuple

    def __post_init__(self):
        if not self.pmf:
            raise ValueError("empty pmf")
        if any(p < 0 for p in self.pmf):
            raise ValueError("negative probability")
        s = sum(self.pmf)
        if abs(float(s) - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {float(s)}")

    @classmethod
    def from_dict(cls, d: dict) -> "OffspringLaw":
        k = max(int(i) for i in d)
        zero = Fraction(0) if all(isinstance(v, (int, Fraction)) for v in d.values()) else 0.0
        out = [zero] * (k + 1)
        for i, p in d.items():
            out[int(i)] = p
        return cls(tuple(out))

    @classmethod
    def point(cls, k: int) -> "OffspringLaw":
        return cls(tuple(Fraction(int(i == k)) for i in range(k + 1)))

    def to_dict(self) -> dict[int, float]:
        return {k: float(p) for k, p in enumerate(self.pmf) if p}

    @property
    def mean(self):
        return sum(k * p for k, p in enumerate(self.pmf))

    @property
    def max_value(self) -> int:
        return max(k for k, p in enumerate(self.pmf) if p)

    def scaled(self, M: int) -> "OffspringLaw":
        """Law of ``M X``."""
        out = [self.pmf[0] * 0] * (M * (len(self.pmf) - 1) + 1)
        for k, p in enumerate(self.pmf):
            out[M * k] += p
        return OffspringLaw(tuple(out))

    def cramer_rate(self) -> float:
        """``sup_t (t - log E exp(t X))``: exponential decay rate of ``P(W = n)`` when subcritical."""
        p = [float(v) for v in self.pmf]
        if self.max_value <= 1:
            return math.inf if len(p) < 2 or p[1] == 0 else -math.log(p[1])

        def ratio(t):  # E[X e^{tX}] / E[e^{tX}]
            w = [pk * math.exp(t * k) for k, pk in enumerate(p)]
            return sum(k * x for k, x in enumerate(w)) / sum(w)

        lo, hi = 0.0, 1.0
        while ratio(hi) < 1.0:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ratio(mid) < 1.0 else (lo, mid)
        t = 0.5 * (lo + hi)
        return t - math.log(sum(pk * math.exp(t * k) for k, pk in enumerate(p)))


@dataclass(frozen=True)
class GWProcess:
    offspring: OffspringLaw
    z0: int = 1

    def __post_init__(self):
        if self.z0 < 0:
            raise ValueError("initial population must be non-negative")

    @property
    def subcritical(self) -> bool:
        return self.offspring.mean < 1


# ---------------------------------------------------------------------------
# simulation

@dataclass
class GWRun:
    generations: list[int]
    total: int  # -1 when the population cap or horizon was hit
    capped: bool


def simulate_gw(p: GWProcess, horizon: int, rng, cap: int = DEFAULT_POP_CAP) -> GWRun:
    """One forward run; ``total = -1`` if not extinct within ``horizon`` generations or above ``cap``."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pmf = np.array([float(x) for x in p.offspring.pmf])
    ks = np.arange(len(pmf))
    z = p.z0
    gens = [z]
    total = z
    for _ in range(horizon):
        if z == 0:
            return GWRun(gens, total, False)
        z = int(gen.multinomial(z, pmf) @ ks)
        gens.append(z)
        total += z
        if total > cap:
            return GWRun(gens, -1, True)
    if z == 0:
        return GWRun(gens, total, False)
    return GWRun(gens, -1, True)


def sample_total_population(p: GWProcess, draws: int, rng, horizon: int = 10_000,
                            cap: int = DEFAULT_POP_CAP) -> np.ndarray:
    """Vectorised draws of ``W``; capped draws are ``-1``."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pmf = np.array([float(x) for x in p.offspring.pmf])
    ks = np.arange(len(pmf))
    z = np.full(draws, p.z0, dtype=np.int64)
    total = z.copy()
    alive = z > 0
    for _ in range(horizon):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        z[idx] = gen.multinomial(z[idx], pmf) @ ks
        total[idx] += z[idx]
        over = total > cap
        z[over] = 0
        total[over] = -1
        alive = z > 0
    total[alive] = -1
    return total


# ---------------------------------------------------------------------------
# exact total-population law

@dataclass
class TotalPopulationLaw:
    """``P(W = n)`` for ``n <= ell_max``; ``remainder = P(W > ell_max)`` (including ``W = inf``)."""

    z0: int
    pmf: dict[int, object]
    ell_max: int
    remainder: object

    def at_least(self, ell: int):
        """``P(W >= ell)``, exact for ``ell <= ell_max + 1``."""
        if ell > self.ell_max + 1:
            raise ValueError(f"tail known only up to {self.ell_max + 1}")
        return self.remainder + sum(p for n, p in self.pmf.items() if n >= ell)

    def greater(self, n: int):
        return self.at_least(n + 1)


def total_population_tail(p: GWProcess, ell_max: int, require_full_mass: bool = False) -> TotalPopulationLaw:
    """Exact law of ``W`` up to ``ell_max`` via the hitting time theorem."""
    law = p.offspring
    if require_full_mass and law.mean > 1:
        raise InfeasibleParameters("supercritical process survives with positive probability")
    one = law.pmf[0] * 0 + 1
    z0 = p.z0
    if z0 == 0:
        return TotalPopulationLaw(0, {0: one}, ell_max, one * 0)
    pmf = list(law.pmf)
    out: dict[int, object] = {}
    conv = [one]  # law of X_1 + ... + X_n truncated at ell_max
    for n in range(1, ell_max + 1):
        nxt = [one * 0] * min(len(conv) + len(pmf) - 1, ell_max + 1)
        for i, a in enumerate(conv):
            if a:
                for k, b in enumerate(pmf):
                    if i + k > ell_max:
                        break
                    if b:
                        nxt[i + k] += a * b
        conv = nxt
        if n >= z0 and n - z0 < len(conv) and conv[n - z0]:
            out[n] = Fraction(z0, n) * conv[n - z0] if isinstance(one, Fraction) else z0 / n * conv[n - z0]
    remainder = one - sum(out.values())
    return TotalPopulationLaw(z0, out, ell_max, remainder)


@dataclass
class TailFit:
    """``P(W > n) <= C exp(-2 kappa n)`` for ``n <= ell_max``; ``kappa`` is the half-rate."""

    C: float
    kappa: float
    ell_max: int
    certified: bool = False
    grid: list[tuple[float, float]] = field(default_factory=list)

    def bound(self, n: int) -> float:
        return self.C * math.exp(-2 * self.kappa * n)


def _stable_tails(law: TotalPopulationLaw, rate: float | None) -> list[float]:
    """``P(W > n)`` for ``n < ell_max`` without the cancellation in ``1 - sum``.

    Exact (``Fraction``) laws use their remainder as is. For float laws the
    mass beyond ``ell_max`` is extrapolated geometrically at ``rate`` from the
    largest of the last few probabilities, and the subtraction remainder is
    used only when it is well above rounding noise.
    """
    L = law.ell_max
    pm = [float(law.pmf.get(m, 0)) for m in range(L + 1)]
    if isinstance(law.remainder, Fraction):
        R = float(law.remainder)
    else:
        r = math.exp(-rate) if rate is not None and math.isfinite(rate) and rate > 0 else 1.0
        last = max(pm[max(0, L - 8):])
        R = last * r / (1 - r) if r < 1 else 1.0
        if law.remainder > 1e-9:
            R = max(R, float(law.remainder))
    tails = [0.0] * L
    acc = R
    for n in range(L - 1, -1, -1):
        acc += pm[n + 1]
        tails[n] = min(1.0, acc)
    return tails


def fit_tail_constants(law: TotalPopulationLaw, kappas: Iterable[float] | None = None,
                       rate: float | None = None) -> TailFit:
    """Smallest ``C`` with ``P(W > n) <= C e^{-2 kappa n}`` over ``n < ell_max``, on a grid of ``kappa``.

    The default grid is ``rate * (0.05, ..., 0.25)`` where ``rate`` is the
    exponential rate of ``P(W = n)``; the fit keeps the last grid point, so
    ``2 kappa`` is half that rate. With ``kappas`` given, the last entry is used.
    """
    grid_k = list(kappas) if kappas is not None else []
    if not grid_k:
        r = rate if rate is not None and math.isfinite(rate) and rate > 0 else 1.0
        grid_k = [r * f for f in (0.05, 0.1, 0.15, 0.2, 0.25)]
    tails = _stable_tails(law, rate)
    grid = []
    for k in grid_k:
        C = max(t * math.exp(2 * k * n) for n, t in enumerate(tails))
        grid.append((k, C))
    k, C = grid[-1]
    return TailFit(C, k, law.ell_max - 1, False, grid)


# ---------------------------------------------------------------------------
# cycle-length domination

@dataclass
class CycleLengthBound:
    """Law of a dominating variable ``xi`` on ``1, 2, ...`` stored by its tail ``P(xi >= ell)``.

    ``certified`` means the tail was taken as a maximum over every finite
    subset of the graph(s) listed in ``family``.
    """

    tail: list[float]  # tail[ell] = P(xi >= ell), tail[0] = tail[1] = 1
    alpha: float
    family: list[str]
    certified: bool

    def at_least(self, ell: int) -> float:
        if ell <= 0:
            return 1.0
        return self.tail[ell] if ell < len(self.tail) else 0.0

    @property
    def pmf(self) -> list[float]:
        t = self.tail + [0.0]
        return [0.0] + [max(0.0, t[k] - t[k + 1]) for k in range(1, len(self.tail))]

    @property
    def mean(self) -> float:
        return sum(self.tail[1:])

    def offspring(self, M: int = 1) -> OffspringLaw:
        """``M (xi - 1)``, renormalised against rounding."""
        pm = self.pmf[1:]
        s = sum(pm)
        return OffspringLaw(tuple(x / s for x in pm)).scaled(M)

    def sum_tail(self, k: int, ell: int) -> float:
        """``P(xi_1 + ... + xi_k >= ell)``."""
        dist = np.array([1.0])
        pm = np.array(self.pmf)
        for _ in range(k):
            dist = np.convolve(dist, pm)
        return float(dist[ell:].sum()) if ell < len(dist) else 0.0


def vertex_cycle_laws(g: Graph, alpha: float, subset: Iterable[int]) -> dict[int, list[float]]:
    """Exact ``P_U(|gamma_x| = k)`` (vertex count) for every ``x`` in ``U``."""
    cc = CycleCounter(g)
    U = to_mask(subset)
    q = math.exp(-alpha)
    logz = _log_eval(cc.poly(U), q)
    out = {}
    for x in from_mask(U):
        law = [0.0] * (bin(U).count("1") + 1)
        law[1] = math.exp(_log_eval(cc.poly(U & ~(1 << x)), q) - logz)
        for k, cyc in directed_cycles_through(g, x, U):
            law[k] += math.exp(k * math.log(q) + _log_eval(cc.poly(U & ~cyc), q) - logz)
        out[x] = law
    return out


def _log_eval(p, q: float) -> float:
    return math.log(sum(c * q**k for k, c in enumerate(p)))


def fit_cycle_bound(graphs: Sequence[Graph], alpha: float, all_subsets: bool | None = None,
                    extend_rate: float | None = None, tol: float = 1e-16) -> CycleLengthBound:
    """Pointwise maximum of ``P_U(|gamma_x| >= ell)`` over the family.

    With ``all_subsets`` (default when every graph has at most 12 vertices)
    the maximum runs over every nonempty ``U`` of every graph, which is exactly
    the supremum in the cycle-length-bound hypothesis for that graph. A
    geometric extension with rate ``extend_rate`` can be appended beyond the
    enumerated range.
    """
    if all_subsets is None:
        all_subsets = all(g.n <= 12 for g in graphs)
    env = [1.0, 1.0]
    for g in graphs:
        masks = range(1, 1 << g.n) if all_subsets else [(1 << g.n) - 1]
        for U in masks:
            for law in vertex_cycle_laws(g, alpha, from_mask(U)).values():
                t = 0.0
                tails = [0.0] * len(law)
                for k in range(len(law) - 1, 0, -1):
                    t += law[k]
                    tails[k] = t
                if len(tails) > len(env):
                    env += [0.0] * (len(tails) - len(env))
                for k in range(2, len(tails)):
                    env[k] = max(env[k], min(1.0, tails[k]))
    while len(env) > 2 and env[-1] <= 0.0:
        env.pop()
    if extend_rate is not None and extend_rate > 0:
        last = env[-1]
        while last > tol:
            last *= math.exp(-extend_rate)
            env.append(last)
    return CycleLengthBound(env, alpha, [g.digest() for g in graphs], bool(all_subsets))


def orbit_size_law(g: Graph, alpha: float, A: Iterable[int], domain: Iterable[int] | None = None) -> list[float]:
    """Exact law of ``|Or(A)|`` under ``P_U`` (``U = domain``), by peeling cycles through ``A``."""
    cc = CycleCounter(g)
    U = to_mask(range(g.n) if domain is None else domain)
    q = math.exp(-alpha)
    logz = _log_eval(cc.poly(U), q)
    A = sorted(set(A))
    law = [0.0] * (bin(U).count("1") + 1)

    def rec(mask: int, rest: list[int], size: int, logw: float):
        rest = [x for x in rest if (mask >> x) & 1]
        if not rest:
            law[size] += math.exp(logw + _log_eval(cc.poly(mask), q) - logz)
            return
        x = rest[0]
        rec(mask & ~(1 << x), rest[1:], size + 1, logw)
        for k, cyc in directed_cycles_through(g, x, mask):
            rec(mask & ~cyc, rest[1:], size + k, logw + k * math.log(q))

    rec(U, A, 0, 0.0)
    return law


def check_orbit_domination(g: Graph, A: Iterable[int], alpha: float, bound: CycleLengthBound,
                           rtol: float = 1e-12) -> CheckResult:
    """``P(|Or(A)| >= ell) <= P(xi_1 + ... + xi_|A| >= ell)`` for every ``ell``, both sides exact."""
    A = sorted(set(A))
    law = orbit_size_law(g, alpha, A)
    lhs, rhs = [], []
    t = 0.0
    tails = [0.0] * (len(law) + 1)
    for k in range(len(law) - 1, -1, -1):
        t += law[k]
        tails[k] = t
    margin = math.inf
    for ell in range(1, len(law)):
        a = tails[ell]
        b = bound.sum_tail(len(A), ell)
        lhs.append(a)
        rhs.append(b)
        margin = min(margin, b - a + rtol * max(a, b))
    return CheckResult("orbit-domination", {"A": A, "alpha": alpha, "n": g.n},
                            lhs, rhs, margin, margin >= 0)


# ---------------------------------------------------------------------------
# comparison lemma

def coupled_gw(offspring: OffspringLaw, z0_small: int, z0_large: int, horizon: int, rng,
               draws: int = 1000, width: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Two GW processes driven by one offspring array ``X[j, i]``.

    Generation ``j + 1`` of each process is ``sum_{i < Z_j} X[j, i]``, so a
    smaller start gives a pathwise smaller process. Returns the two
    ``(draws, horizon + 1)`` generation arrays (populations clipped at ``width``).
    """
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pmf = np.array([float(x) for x in offspring.pmf])
    a = np.zeros((draws, horizon + 1), dtype=np.int64)
    b = np.zeros_like(a)
    a[:, 0], b[:, 0] = min(z0_small, width), min(z0_large, width)
    for j in range(horizon):
        X = gen.choice(len(pmf), size=(draws, width), p=pmf)
        cs = np.concatenate([np.zeros((draws, 1), dtype=np.int64), np.cumsum(X, axis=1)], axis=1)
        a[:, j + 1] = np.minimum(cs[np.arange(draws), a[:, j]], width)
        b[:, j + 1] = np.minimum(cs[np.arange(draws), b[:, j]], width)
    return a, b


def dkw_epsilon(n: int, beta: float = 0.05) -> float:
    """One-sided DKW band half-width at confidence ``1 - beta``."""
    return math.sqrt(math.log(1 / beta) / (2 * n))


@dataclass
class ComparisonReport:
    statistic: float
    epsilon: float
    passed: bool
    precondition_ok: bool
    failures: list = field(default_factory=list)
    lhs: list[float] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"check": "comparison-lemma", "params": {"epsilon": self.epsilon},
                "lhs": self.lhs, "rhs": self.rhs, "margin": self.epsilon - self.statistic,
                "pass": self.passed, "precondition_ok": self.precondition_ok,
                "failures": self.failures}


def comparison_lemma_harness(sums1: Sequence[int], tail2, ell_max: int, beta: float = 0.05,
                             certificates: Sequence[bool] | None = None,
                             mc_epsilon2: float = 0.0) -> ComparisonReport:
    """Empirical test of ``sum M^1 <= sum M^2`` in the stochastic order.

    ``sums1`` are observed totals of process 1; ``tail2(ell)`` is
    ``P(sum M^2 >= ell)`` (exact, or MC with half-width ``mc_epsilon2``).
    The statistic is ``max_ell (Fhat_1(>= ell) - tail2(ell))``; it passes when
    below the one-sided DKW band. Failed per-step certificates are reported as
    a precondition violation instead.
    """
    if certificates is not None and not all(certificates):
        bad = [i for i, c in enumerate(certificates) if not c]
        return ComparisonReport(math.nan, math.nan, False, False, bad)
    x = np.asarray(sums1)
    n = len(x)
    eps = dkw_epsilon(n, beta) + mc_epsilon2
    lhs = [float(np.mean(x >= ell)) for ell in range(ell_max + 1)]
    rhs = [float(tail2(ell)) for ell in range(ell_max + 1)]
    stat = max(a - b for a, b in zip(lhs, rhs))
    return ComparisonReport(stat, eps, stat <= eps, True, [], lhs, rhs)
