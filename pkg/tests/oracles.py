"""Independent reference implementations used as test oracles."""
from fractions import Fraction
from functools import lru_cache


def forest_law(pmf, roots, max_nodes):
    """P(W = n) by summing over every ordered forest of ``roots`` trees with n <= max_nodes nodes."""

    @lru_cache(maxsize=None)
    def trees(n):
        # weight of all ordered trees with exactly n nodes
        if n < 1:
            return Fraction(0)
        return sum((pmf[k] * forests(k, n - 1) for k in range(len(pmf)) if pmf[k]), Fraction(0))

    @lru_cache(maxsize=None)
    def forests(k, n):
        if k == 0:
            return Fraction(int(n == 0))
        return sum((trees(m) * forests(k - 1, n - m) for m in range(1, n - k + 2)), Fraction(0))

    return {n: forests(roots, n) for n in range(1, max_nodes + 1)}


def explicit_plane_trees(n):
    """All ordered trees with n nodes as child-count sequences in preorder."""
    if n == 1:
        return [(0,)]
    out = []
    for k in range(1, n):
        for split in _compositions(n - 1, k):
            for parts in _product([explicit_plane_trees(m) for m in split]):
                out.append((k,) + sum(parts, ()))
    return out


def _compositions(total, k):
    if k == 1:
        yield (total,)
        return
    for first in range(1, total - k + 2):
        for rest in _compositions(total - first, k - 1):
            yield (first,) + rest


def _product(lists):
    if not lists:
        yield ()
        return
    for a in lists[0]:
        for rest in _product(lists[1:]):
            yield (a,) + rest
