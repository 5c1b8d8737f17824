"""Single-pass moments and the mean/standard-deviation cut points.

Everything here is a pure function of its inputs. ``compute_moments`` makes
one pass over the values accumulating power sums of ``x - x[0]``; the shift
keeps the third-order sum well conditioned for data sitting far from zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

#: Default adaptive scaling constant.
DEFAULT_ALPHA = 0.25
#: Default clip applied to ``|skewness|`` before scaling.
DEFAULT_GAMMA_MAX = 2.0

# Relative size (against |mean|) below which a standard deviation is treated
# as zero.
_DEGENERATE_RTOL = 1e-12
_CHUNK = 16384
# rounding-error scale for the third central moment, in units of eps
_M3_NOISE = 8.0 * np.finfo(np.float64).eps


class MomentsStatus(enum.Enum):
    OK = "ok"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class AttributeMoments:
    """Count, mean, population standard deviation and skewness of a column.

    ``skewness`` is NaN when the status is degenerate; callers must not use it.
    """

    n: int
    mean: float
    stddev: float
    skewness: float


@dataclass(frozen=True)
class AdaptiveMultipliers:
    k_lower: float
    k_upper: float
    alpha: float
    gamma_max: float


@dataclass(frozen=True)
class SplitPoints:
    s1: float
    s2: float
    s3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.s1, self.s2, self.s3)

    @property
    def strictly_increasing(self) -> bool:
        return self.s1 < self.s2 < self.s3


class DegenerateMomentsError(ValueError):
    """Raised when split points are requested from degenerate moments."""


def power_sums(x: np.ndarray, idx: np.ndarray | None = None
               ) -> tuple[int, float, float, float, float, float]:
    """``(n, shift, Σd, Σd², Σd³, Σ|d|³)`` with ``d = x - x[0]``, streamed in fixed-size chunks.

    With ``idx`` the values are ``x[idx]``, gathered chunk by chunk. Any NaN
    makes the sums NaN. ``Σ|d|³`` only sizes the rounding error of ``Σd³``.
    """
    n = int(x.shape[0] if idx is None else idx.shape[0])
    if n == 0:
        return 0, 0.0, 0.0, 0.0, 0.0, 0.0
    shift = float(x[0] if idx is None else x[idx[0]])
    s1 = s2 = s3 = a3 = 0.0
    # bounded temporaries: large fresh allocations cost more than the arithmetic
    for a in range(0, n, _CHUNK):
        c = x[a:a + _CHUNK] if idx is None else x[idx[a:a + _CHUNK]]
        d = c - shift
        s1 += float(d.sum())
        dk = d * d
        s2 += float(dk.sum())
        dk *= d
        s3 += float(dk.sum())
        np.abs(dk, out=dk)
        a3 += float(dk.sum())
    return n, shift, s1, s2, s3, a3


def moments_from_sums(n: int, shift: float, s1: float, s2: float, s3: float, a3: float = 0.0
                      ) -> tuple[AttributeMoments, MomentsStatus]:
    if n == 0:
        return AttributeMoments(0, math.nan, 0.0, math.nan), MomentsStatus.DEGENERATE
    m = s1 / n
    # central moments from the raw (shifted) ones
    var = s2 / n - m * m
    m3 = s3 / n - 3.0 * m * (s2 / n) + 2.0 * m * m * m
    mean = shift + m
    stddev = math.sqrt(var) if var > 0.0 else 0.0

    # a spread this small against the mean would collapse the cut points
    if n < 2 or stddev == 0.0 or stddev <= _DEGENERATE_RTOL * abs(mean):
        return AttributeMoments(n, mean, stddev, math.nan), MomentsStatus.DEGENERATE
    # A third moment inside its own rounding error has no sign worth trusting;
    # report exact zero so symmetric data gives exactly the unadjusted cut points.
    noise = _M3_NOISE * (math.log2(n) + 1.0) * (a3 / n + 3.0 * abs(m) * (s2 / n) + 2.0 * abs(m) ** 3)
    skewness = 0.0 if abs(m3) <= noise else m3 / (stddev * stddev * stddev)
    return AttributeMoments(n, mean, stddev, skewness), MomentsStatus.OK


def compute_moments(values) -> tuple[AttributeMoments, MomentsStatus]:
    """Mean, population stddev and skewness from one pass of shifted power sums.

    Missing values must already be removed. Degenerate status is returned
    (not raised) for fewer than two values or a numerically zero spread.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        x = x.ravel()
    sums = power_sums(x)
    if math.isnan(sums[2]):
        raise ValueError("compute_moments received NaN; drop missing values first")
    return moments_from_sums(*sums)


def adaptive_multipliers(
    skewness: float,
    alpha: float = DEFAULT_ALPHA,
    gamma_max: float = DEFAULT_GAMMA_MAX,
) -> AdaptiveMultipliers:
    """Shrink the multiplier on the dense side, stretch it on the tail side.

    >>> adaptive_multipliers(-1.2)
    AdaptiveMultipliers(k_lower=1.3, k_upper=0.7, alpha=0.25, gamma_max=2.0)
    """
    if alpha < 0 or gamma_max < 0:
        raise ValueError("alpha and gamma_max must be non-negative")
    if not math.isfinite(skewness):
        raise ValueError(f"skewness must be finite, got {skewness!r}")
    d = alpha * min(abs(skewness), gamma_max)
    if skewness > 0:
        return AdaptiveMultipliers(1.0 - d, 1.0 + d, alpha, gamma_max)
    if skewness < 0:
        return AdaptiveMultipliers(1.0 + d, 1.0 - d, alpha, gamma_max)
    return AdaptiveMultipliers(1.0, 1.0, alpha, gamma_max)


def _require_ok(m: AttributeMoments) -> None:
    if m.n < 2 or not m.stddev > 0.0 or math.isnan(m.mean):
        raise DegenerateMomentsError(f"cannot place split points for degenerate moments {m}")


def split_points_msd(m: AttributeMoments) -> SplitPoints:
    _require_ok(m)
    return SplitPoints(m.mean - m.stddev, m.mean, m.mean + m.stddev)


def split_points_amsd(m: AttributeMoments, k: AdaptiveMultipliers) -> SplitPoints:
    _require_ok(m)
    return SplitPoints(m.mean - k.k_lower * m.stddev, m.mean, m.mean + k.k_upper * m.stddev)


def assign_bin(x: float, s: SplitPoints) -> int:
    """Index of the half-open interval holding ``x``; boundaries go up."""
    return int(x >= s.s1) + int(x >= s.s2) + int(x >= s.s3)


def assign_bins(x: np.ndarray, s: SplitPoints, idx: np.ndarray | None = None) -> np.ndarray:
    """Vectorised :func:`assign_bin` over ``x`` (or ``x[idx]``), returning int8.

    NaN lands in bin 0; callers mask it first.
    """
    n = x.shape[0] if idx is None else idx.shape[0]
    out = np.empty(n, dtype=np.int8)
    for a in range(0, n, _CHUNK):
        c = x[a:a + _CHUNK] if idx is None else x[idx[a:a + _CHUNK]]
        o = out[a:a + _CHUNK]
        np.greater_equal(c, s.s1, out=o.view(np.bool_))
        o += (c >= s.s2).view(np.int8)
        o += (c >= s.s3).view(np.int8)
    return out
