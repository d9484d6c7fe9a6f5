"""Brute-force enumerators used as independent references for the exact tests."""

import itertools
from fractions import Fraction


def brute_mw(a, b):
    """Permutation p-value from pairwise-count U (ties count 1/2)."""
    pooled = list(a) + list(b)
    n1 = len(a)

    def u_of(x, y):
        return sum(Fraction(1) if xi > yi else Fraction(1, 2) if xi == yi else 0 for xi in x for yi in y)

    center = Fraction(n1 * len(b), 2)
    obs = abs(u_of(a, b) - center)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n1):
        chosen = set(idx)
        x = [pooled[i] for i in idx]
        y = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        hits += abs(u_of(x, y) - center) >= obs
    return Fraction(hits, total)


def brute_fisher(table):
    """Enumerate every way to pick the first column from the pooled items."""
    (a, b), (c, d) = table
    row = [0] * (a + b) + [1] * (c + d)
    counts = {}
    for idx in itertools.combinations(range(len(row)), a + c):
        x = sum(1 for i in idx if row[i] == 0)
        counts[x] = counts.get(x, 0) + 1
    obs = counts[a]
    return Fraction(sum(v for v in counts.values() if v <= obs), sum(counts.values()))
