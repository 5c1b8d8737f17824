"""Independent reference implementations used only by the tests.

These are deliberately slow and literal: two-pass moments, entropy from
explicit probability sums, and an O(N^2) scan over every midpoint with
entropies evaluated in 60-digit arithmetic so exact ties are recognised.
"""

from __future__ import annotations

import math
from collections import Counter

import mpmath

mpmath.mp.dps = 60
TIE = mpmath.mpf("1e-40")


def two_pass_moments(values):
    """(mean, population stddev, skewness) with explicit deviation sums."""
    x = [float(v) for v in values]
    n = len(x)
    mu = math.fsum(x) / n
    dev = [v - mu for v in x]
    var = math.fsum(d * d for d in dev) / n
    sd = math.sqrt(var)
    m3 = math.fsum(d * d * d for d in dev) / n
    skew = m3 / sd ** 3 if sd > 0 else math.nan
    return mu, sd, skew


def entropy(labels) -> mpmath.mpf:
    n = len(labels)
    h = mpmath.mpf(0)
    for c in Counter(labels).values():
        p = mpmath.mpf(c) / n
        h -= p * mpmath.log(p, 2)
    return h


def partition_score(labels, assignment):
    """(info_gain, split_info) in high precision from explicit child lists."""
    n = len(labels)
    children: dict[int, list] = {}
    for lab, a in zip(labels, assignment):
        children.setdefault(a, []).append(lab)
    gain = entropy(labels)
    split = mpmath.mpf(0)
    for members in children.values():
        w = mpmath.mpf(len(members)) / n
        gain -= w * entropy(members)
        split -= w * mpmath.log(w, 2)
    return gain, split


def brute_midpoint(a: float, b: float) -> float:
    t = (a + b) / 2.0
    return t if a < t <= b else b


def brute_exhaustive(x, y):
    """Best midpoint threshold by information gain, ties to the smaller threshold.

    Returns ``(threshold, gain)`` or None when fewer than two distinct values.
    """
    pairs = [(float(v), int(c)) for v, c in zip(x, y) if not math.isnan(v)]
    vals = sorted({v for v, _ in pairs})
    best = None
    for a, b in zip(vals, vals[1:]):
        t = brute_midpoint(a, b)
        labels = [c for _, c in pairs]
        assignment = [int(v >= t) for v, _ in pairs]
        g, _ = partition_score(labels, assignment)
        if best is None or g > best[1] + TIE:
            best = (t, g)
    return best
