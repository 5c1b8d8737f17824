"""Seeded synthetic datasets for the offline benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset


def gaussian_mixture(n_rows: int = 500, n_attributes: int = 4, seed: int = 0,
                     components: int = 2, spread: float = 1.5) -> Dataset:
    """Two classes, each a mixture of ``components`` unit-variance Gaussians.

    Component centres are drawn from N(0, spread^2 I), so classes overlap and
    fully grown trees have noise to chase.
    """
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, spread, size=(2, components, n_attributes))
    y = np.arange(n_rows) % 2
    rng.shuffle(y)
    comp = rng.integers(0, components, size=n_rows)
    X = centres[y, comp] + rng.normal(size=(n_rows, n_attributes))
    return Dataset.from_arrays(X, y, name=f"gauss-mix-{seed}")


def skewed_exponential(n_rows: int = 2000, seed: int = 0, boundary_sd: float = 0.5,
                       noise: float = 0.0, n_noise_attributes: int = 0) -> Dataset:
    """Exponential attribute whose class boundary sits below the mean.

    ``x0 ~ Exp(1)``, whose population mean and standard deviation are both 1;
    the class is ``x0 < 1 - boundary_sd``, i.e. ``boundary_sd`` standard
    deviations below the mean, with a fraction ``noise`` of labels flipped. Extra exponential attributes
    carry no signal.
    """
    rng = np.random.default_rng(seed)
    X = rng.exponential(1.0, size=(n_rows, 1 + n_noise_attributes))
    y = (X[:, 0] < 1.0 - boundary_sd).astype(np.int64)
    flip = rng.random(n_rows) < noise
    y[flip] = 1 - y[flip]
    return Dataset.from_arrays(X, y, name=f"skew-exp-{seed}")


def heavy_tail_with_outlier(n_rows: int = 500, seed: int = 0, outlier: float = 1e4) -> Dataset:
    """Log-normal attribute plus a single extreme outlier row."""
    rng = np.random.default_rng(seed)
    X = rng.lognormal(0.0, 1.0, size=(n_rows, 2))
    y = ((X[:, 0] + 0.5 * rng.normal(size=n_rows)) > np.median(X[:, 0])).astype(np.int64)
    X[rng.integers(n_rows), 0] = outlier
    return Dataset.from_arrays(X, y, name=f"heavy-tail-{seed}")


@dataclass(frozen=True)
class ScalingGenerator:
    """Continuous data for split-search timing: ``n_attributes`` columns, two classes."""

    n_attributes: int = 1
    seed: int = 0

    def make(self, n_rows: int) -> Dataset:
        rng = np.random.default_rng((self.seed, n_rows))
        X = rng.lognormal(0.0, 0.75, size=(n_rows, self.n_attributes))
        y = (X[:, 0] + rng.normal(0.0, 0.5, size=n_rows) > 1.0).astype(np.int64)
        return Dataset.from_arrays(X, y, name=f"scaling-{n_rows}")
