"""Split proposal and scoring.

Every proposal is scored from its child-by-class count matrix by
:func:`score_counts`. Scores are computed canonically (see
:func:`_xlogx_sum`): partitions with equal true gain get bit-identical
floats, so scores can be compared with exact float equality.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .data import MISSING_CODE, RowView
from .stats import (
    DEFAULT_ALPHA,
    DEFAULT_GAMMA_MAX,
    AttributeMoments,
    MomentsStatus,
    SplitPoints,
    adaptive_multipliers,
    assign_bin,
    assign_bins,
    moments_from_sums,
    power_sums,
    split_points_amsd,
    split_points_msd,
)

# split_info at or below this is treated as zero (gain ratio undefined)
SPLIT_INFO_EPS = 1e-12


@functools.lru_cache(maxsize=65536)
def _factor(c: int) -> tuple[tuple[int, int], ...]:
    out = []
    d = 2
    while d * d <= c:
        if c % d == 0:
            e = 0
            while c % d == 0:
                c //= d
                e += 1
            out.append((d, e))
        d += 1 if d == 2 else 2
    if c > 1:
        out.append((c, 1))
    return tuple(out)


def _xlogx_sum(signed_counts: Iterable[tuple[int, int]]) -> float:
    """``Σ sign·c·log2(c)`` evaluated canonically.

    The sum is first reduced to integer coefficients on ``log2(p)`` for primes
    ``p``. Logs of primes are linearly independent over the rationals, so two
    sums are equal exactly when their coefficients are, and equal sums come
    out bit-identical here. Exact ties between candidate splits therefore stay
    ties, and a zero gain is exactly zero.
    """
    coef: dict[int, int] = {}
    for sign, c in signed_counts:
        if c > 1:
            for prime, e in _factor(c):
                coef[prime] = coef.get(prime, 0) + sign * c * e
    return math.fsum(a * math.log2(p) for p, a in sorted(coef.items()) if a)


def class_entropy(counts: Sequence[int]) -> float:
    """Shannon entropy (bits) of a class-count vector."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("class counts must be non-negative")
    n = sum(counts)
    if n == 0:
        raise ValueError("entropy of an empty node is undefined")
    h = _xlogx_sum([(1, n)] + [(-1, c) for c in counts]) / n
    return max(h, 0.0)


@dataclass(frozen=True)
class SplitScore:
    info_gain: float
    split_info: float
    # None when split_info <= SPLIT_INFO_EPS
    gain_ratio: float | None
    child_counts: tuple[int, ...]


def score_counts(counts: np.ndarray) -> SplitScore:
    """Score a partition given its ``(arity, n_classes)`` count matrix."""
    counts = np.asarray(counts, dtype=np.int64)
    sizes = counts.sum(axis=1).tolist()
    totals = counts.sum(axis=0).tolist()
    n = int(sum(sizes))
    if n == 0:
        raise ValueError("cannot score a partition of an empty node")
    size_terms = [(-1, s) for s in sizes]
    gain_terms = [(1, n)] + [(-1, c) for c in totals] + size_terms
    gain_terms += [(1, c) for c in counts.ravel().tolist()]
    info_gain = max(_xlogx_sum(gain_terms) / n, 0.0)
    split_info = max(_xlogx_sum([(1, n)] + size_terms) / n, 0.0)
    gain_ratio = info_gain / split_info if split_info > SPLIT_INFO_EPS else None
    return SplitScore(info_gain, split_info, gain_ratio, tuple(int(s) for s in sizes))


def partition_counts(labels: np.ndarray, assignment: np.ndarray, arity: int, n_classes: int) -> np.ndarray:
    """Child-by-class counts; rows with a negative child index are ignored."""
    keep = assignment >= 0
    if not keep.all():
        labels, assignment = labels[keep], assignment[keep]
    flat = np.bincount(assignment * n_classes + labels, minlength=arity * n_classes)
    return flat.reshape(arity, n_classes)


def score_partition(parent_labels, child_assignment, arity: int, n_classes: int | None = None) -> SplitScore:
    labels = np.asarray(parent_labels, dtype=np.intp)
    assignment = np.asarray(child_assignment, dtype=np.intp)
    if labels.size == 0:
        raise ValueError("empty parent")
    if assignment.shape != labels.shape:
        raise ValueError("one child index per parent row is required")
    if assignment.max() >= arity:
        raise ValueError(f"child index {int(assignment.max())} >= arity {arity}")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return score_counts(partition_counts(labels, assignment, arity, n_classes))


# -- rules ------------------------------------------------------------------

@dataclass(frozen=True)
class BinnedSplit:
    """Four-way split at three cut points (MSD / AMSD)."""

    attribute: int
    points: SplitPoints

    arity = 4

    def child_for(self, value) -> int | None:
        if value != value:
            return None
        return assign_bin(value, self.points)

    def route_array(self, values: np.ndarray) -> np.ndarray:
        out = assign_bins(values, self.points)
        out[np.isnan(values)] = -1
        return out


@dataclass(frozen=True)
class ThresholdSplit:
    """Binary split ``x < threshold`` / ``x >= threshold``."""

    attribute: int
    threshold: float

    arity = 2

    def child_for(self, value) -> int | None:
        if value != value:
            return None
        return 0 if value < self.threshold else 1

    def route_array(self, values: np.ndarray) -> np.ndarray:
        out = (values >= self.threshold).astype(np.intp)
        out[np.isnan(values)] = -1
        return out


@dataclass(frozen=True)
class CategoricalSplit:
    """One child per category code of the attribute."""

    attribute: int
    n_categories: int

    @property
    def arity(self) -> int:
        return self.n_categories

    def child_for(self, value) -> int | None:
        code = int(value)
        return code if 0 <= code < self.n_categories else None

    def route_array(self, values: np.ndarray) -> np.ndarray:
        out = np.asarray(values, dtype=np.intp).copy()
        out[(out < 0) | (out >= self.n_categories)] = -1
        return out


SplitRule = Union[BinnedSplit, ThresholdSplit, CategoricalSplit]


def route(rule: SplitRule, row: Sequence, fallback: int | None = None) -> int | None:
    """Child index for ``row``; missing values and unseen categories go to ``fallback``."""
    child = rule.child_for(row[rule.attribute])
    return fallback if child is None else child


# -- strategies -------------------------------------------------------------

class StrategyKind(enum.Enum):
    EXHAUSTIVE = "exhaustive"
    MSD = "msd"
    AMSD = "amsd"


@dataclass(frozen=True)
class SplitterStrategy:
    kind: StrategyKind
    alpha: float = DEFAULT_ALPHA
    gamma_max: float = DEFAULT_GAMMA_MAX

    def __post_init__(self):
        if self.alpha < 0 or self.gamma_max < 0:
            raise ValueError("alpha and gamma_max must be non-negative")

    @classmethod
    def exhaustive(cls) -> "SplitterStrategy":
        return cls(StrategyKind.EXHAUSTIVE)

    @classmethod
    def msd(cls) -> "SplitterStrategy":
        return cls(StrategyKind.MSD)

    @classmethod
    def amsd(cls, alpha: float = DEFAULT_ALPHA, gamma_max: float = DEFAULT_GAMMA_MAX) -> "SplitterStrategy":
        return cls(StrategyKind.AMSD, alpha, gamma_max)

    @classmethod
    def parse(cls, name: str, alpha: float = DEFAULT_ALPHA, gamma_max: float = DEFAULT_GAMMA_MAX):
        kind = StrategyKind(name.lower())
        if kind is StrategyKind.AMSD:
            return cls.amsd(alpha, gamma_max)
        return cls(kind)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is StrategyKind.AMSD:
            d.update(alpha=self.alpha, gamma_max=self.gamma_max)
        return d

    @classmethod
    def from_dict(cls, d) -> "SplitterStrategy":
        return cls(StrategyKind(d["kind"]), d.get("alpha", DEFAULT_ALPHA), d.get("gamma_max", DEFAULT_GAMMA_MAX))


# -- proposals --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Proposal:
    rule: SplitRule
    score: SplitScore
    # per view row: child index, or -1 where the attribute is missing
    assignment: np.ndarray
    # class counts per child, shape (arity, n_classes)
    counts: np.ndarray
    moments: AttributeMoments | None = None

    def __iter__(self):
        # unpacks as (rule, score)
        return iter((self.rule, self.score))


def _present(x: np.ndarray, y: np.ndarray):
    nan = np.isnan(x)
    if not nan.any():
        return x, y, None
    mask = ~nan
    return x[mask], y[mask], mask


def _spread(assignment_present: np.ndarray, mask, n: int) -> np.ndarray:
    if mask is None:
        return assignment_present
    out = np.full(n, -1, dtype=assignment_present.dtype)
    out[mask] = assignment_present
    return out


def binned_proposal(x, y, n_classes: int, attribute: int,
                    alpha: float | None = None, gamma_max: float = DEFAULT_GAMMA_MAX,
                    idx: np.ndarray | None = None) -> Proposal | None:
    """MSD proposal when ``alpha`` is None, AMSD otherwise.

    ``y`` holds the node's labels. The node's values are ``x``, or ``x[idx]``
    when ``idx`` is given (gathered in chunks, never materialised).
    """
    sums = power_sums(x, idx)
    if math.isnan(sums[2]):
        full = x if idx is None else x[idx]
        xp, yp, mask = _present(full, y)
        n_all, x, idx = full.shape[0], xp, None
        sums = power_sums(x)
    else:
        yp, mask = y, None
        n_all = x.shape[0] if idx is None else idx.shape[0]
    m, status = moments_from_sums(*sums)
    if status is MomentsStatus.DEGENERATE:
        return None
    if alpha is None:
        points = split_points_msd(m)
    else:
        points = split_points_amsd(m, adaptive_multipliers(m.skewness, alpha, gamma_max))
    if not points.strictly_increasing:
        return None
    bins = assign_bins(x, points, idx)
    if 4 * n_classes <= 127:
        code = bins * np.int8(n_classes)
        code += yp.astype(np.int8)
    else:
        code = bins.astype(np.intp) * n_classes + yp
    counts = np.bincount(code, minlength=4 * n_classes).reshape(4, n_classes)
    rule = BinnedSplit(attribute, points)
    return Proposal(rule, score_counts(counts), _spread(bins, mask, n_all), counts, m)


def midpoint(a: float, b: float) -> float:
    """Threshold between adjacent distinct values ``a < b`` that separates them."""
    t = 0.5 * (a + b)
    return t if a < t <= b else b


def threshold_proposal(x, y, n_classes: int, attribute: int) -> Proposal | None:
    """Best binary threshold by information gain over all midpoints; ties go to the smaller threshold."""
    xp, yp, mask = _present(x, y)
    n = xp.shape[0]
    if n < 2:
        return None
    order = np.argsort(xp)
    xs = xp[order]
    ys = yp[order]
    cand = np.flatnonzero(xs[:-1] < xs[1:])
    if cand.size == 0:
        return None

    totals = np.bincount(ys, minlength=n_classes)
    if np.count_nonzero(totals) <= 1:
        best = [int(cand[0])]
    else:
        # sum of c*log2(c) terms over both children; gain = const - S/n
        table = np.zeros(n + 1)
        ar = np.arange(1, n + 1, dtype=np.float64)
        table[1:] = ar * np.log2(ar)
        n_left = cand + 1
        s = table[n_left] + table[n - n_left]
        for k in range(n_classes):
            if totals[k] == 0:
                continue
            left_k = np.cumsum(ys == k)[cand]
            s -= table[left_k] + table[totals[k] - left_k]
        lo = s.min()
        best = cand[s <= lo + 1e-9 * max(1.0, abs(lo))].tolist()

    # exact comparison among the near-optimal candidates
    chosen = None
    for i in best:
        left = np.bincount(ys[: i + 1], minlength=n_classes)
        counts = np.vstack([left, totals - left])
        score = score_counts(counts)
        if chosen is None or score.info_gain > chosen[1].info_gain:
            chosen = (i, score, counts)
    i, score, counts = chosen
    rule = ThresholdSplit(attribute, midpoint(float(xs[i]), float(xs[i + 1])))
    assignment = (xp >= rule.threshold).astype(np.intp)
    return Proposal(rule, score, _spread(assignment, mask, x.shape[0]), counts)


def categorical_proposal(codes, y, n_classes: int, attribute: int, n_categories: int) -> Proposal | None:
    codes = np.asarray(codes, dtype=np.intp)
    mask = codes != MISSING_CODE
    cp, yp = (codes, y) if mask.all() else (codes[mask], y[mask])
    if cp.size == 0 or np.unique(cp).size < 2:
        return None
    counts = np.bincount(cp * n_classes + yp, minlength=n_categories * n_classes).reshape(n_categories, n_classes)
    assignment = codes if mask.all() else np.where(mask, codes, -1)
    return Proposal(CategoricalSplit(attribute, n_categories), score_counts(counts), assignment, counts)


# -- public view-level API --------------------------------------------------

def _check_continuous(view: RowView, attribute_index: int) -> None:
    if not view.dataset.schema.attributes[attribute_index].is_continuous:
        raise ValueError(f"attribute {attribute_index} is not continuous")


def propose_msd(view: RowView, attribute_index: int) -> Proposal | None:
    _check_continuous(view, attribute_index)
    return binned_proposal(view.column(attribute_index), view.labels(),
                           view.dataset.schema.n_classes, attribute_index)


def propose_amsd(view: RowView, attribute_index: int, alpha: float = DEFAULT_ALPHA,
                 gamma_max: float = DEFAULT_GAMMA_MAX) -> Proposal | None:
    _check_continuous(view, attribute_index)
    return binned_proposal(view.column(attribute_index), view.labels(),
                           view.dataset.schema.n_classes, attribute_index, alpha, gamma_max)


def propose_exhaustive(view: RowView, attribute_index: int) -> Proposal | None:
    _check_continuous(view, attribute_index)
    return threshold_proposal(view.column(attribute_index), view.labels(),
                              view.dataset.schema.n_classes, attribute_index)


def propose_categorical(view: RowView, attribute_index: int) -> Proposal | None:
    attr = view.dataset.schema.attributes[attribute_index]
    if attr.is_continuous:
        raise ValueError(f"attribute {attribute_index} is not categorical")
    return categorical_proposal(view.column(attribute_index), view.labels(),
                                view.dataset.schema.n_classes, attribute_index, len(attr.categories))


def propose(view: RowView, attribute_index: int, strategy: SplitterStrategy) -> Proposal | None:
    """Dispatch on attribute kind and strategy."""
    attr = view.dataset.schema.attributes[attribute_index]
    if not attr.is_continuous:
        return propose_categorical(view, attribute_index)
    if strategy.kind is StrategyKind.EXHAUSTIVE:
        return propose_exhaustive(view, attribute_index)
    if strategy.kind is StrategyKind.MSD:
        return propose_msd(view, attribute_index)
    return propose_amsd(view, attribute_index, strategy.alpha, strategy.gamma_max)


def select_best(proposals: Sequence[Proposal]) -> Proposal | None:
    """C4.5 selection: among candidates with at least average positive gain, maximise gain ratio.

    Ties go to the lowest attribute index. Candidates with zero gain or an
    undefined gain ratio are never selected.
    """
    live = [p for p in proposals if p.score.info_gain > 0.0 and p.score.gain_ratio is not None]
    if not live:
        return None
    mean_gain = math.fsum(p.score.info_gain for p in live) / len(live)
    top_gain = max(p.score.info_gain for p in live)
    eligible = [p for p in live if p.score.info_gain >= mean_gain or p.score.info_gain == top_gain]
    best = None
    for p in eligible:
        if (best is None or p.score.gain_ratio > best.score.gain_ratio
                or (p.score.gain_ratio == best.score.gain_ratio and p.rule.attribute < best.rule.attribute)):
            best = p
    return best
