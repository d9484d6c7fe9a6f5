"""Two-sample rank test and 2x2 exact test used to compare training runs.

Small problems are solved by exhaustive enumeration in rational arithmetic,
so the p-values there are exact fractions.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import NamedTuple, Sequence

EXACT_MAX_TOTAL = 12


class MannWhitneyResult(NamedTuple):
    statistic: float  # U for the first sample
    pvalue: float


def midranks(values: Sequence[float]) -> list[Fraction]:
    """1-based ranks, ties sharing the mean of the positions they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks: list[Fraction] = [Fraction(0)] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = Fraction(i + j + 2, 2)
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def _u_from_ranks(rank_sum: Fraction, n1: int) -> Fraction:
    return rank_sum - Fraction(n1 * (n1 + 1), 2)


def mann_whitney_exact_pvalue(a: Sequence[float], b: Sequence[float]) -> Fraction:
    """Two-sided p by enumerating every assignment of the pooled ranks.

    Extremeness is ``|U - n1*n2/2|``; ties keep their midranks in every
    relabeling, so this is the exact conditional permutation test.
    """
    n1, n2 = len(a), len(b)
    ranks = midranks(list(a) + list(b))
    center = Fraction(n1 * n2, 2)
    observed = abs(_u_from_ranks(sum(ranks[:n1], Fraction(0)), n1) - center)
    hits = total = 0
    for subset in itertools.combinations(range(n1 + n2), n1):
        u = _u_from_ranks(sum((ranks[i] for i in subset), Fraction(0)), n1)
        total += 1
        if abs(u - center) >= observed:
            hits += 1
    return Fraction(hits, total)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """Mann-Whitney U for ``a`` with a two-sided p-value.

    Exact enumeration when ``len(a) + len(b) <= 12``; otherwise the normal
    approximation with tie and continuity corrections.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n1, n2 = len(a), len(b)
    n = n1 + n2
    ranks = midranks(a + b)
    u = _u_from_ranks(sum(ranks[:n1], Fraction(0)), n1)
    if n <= EXACT_MAX_TOTAL:
        return MannWhitneyResult(float(u), float(mann_whitney_exact_pvalue(a, b)))

    tie_term = 0
    counts: dict[float, int] = {}
    for v in a + b:
        counts[v] = counts.get(v, 0) + 1
    for t in counts.values():
        tie_term += t**3 - t
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return MannWhitneyResult(float(u), 1.0)
    z = (abs(float(u) - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    if z <= 0:
        return MannWhitneyResult(float(u), 1.0)
    return MannWhitneyResult(float(u), min(1.0, 2.0 * _normal_sf(z)))


def _check_table(table) -> tuple[int, int, int, int]:
    (a, b), (c, d) = table
    cells = []
    for v in (a, b, c, d):
        if int(v) != v:
            raise ValueError("table entries must be integers")
        if v < 0:
            raise ValueError("table entries must be non-negative")
        cells.append(int(v))
    if sum(cells) == 0:
        raise ValueError("table total must be positive")
    return tuple(cells)


def fisher_exact_pvalue(table) -> Fraction:
    """Two-sided Fisher p as an exact fraction.

    Sums the hypergeometric probabilities of every table with the observed
    margins whose probability does not exceed the observed one.
    """
    a, b, c, d = _check_table(table)
    row1, col1, n = a + b, a + c, a + b + c + d
    denom = math.comb(n, col1)

    def prob(x: int) -> Fraction:
        return Fraction(math.comb(row1, x) * math.comb(n - row1, col1 - x), denom)

    lo, hi = max(0, col1 - (n - row1)), min(row1, col1)
    observed = prob(a)
    return sum((p for p in map(prob, range(lo, hi + 1)) if p <= observed), Fraction(0))


def fisher_exact(table) -> float:
    return float(fisher_exact_pvalue(table))
