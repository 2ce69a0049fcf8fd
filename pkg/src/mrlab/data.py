"""Synthetic datasets with closed-form conditional moments.

Each generator is a pure function of (spec, rng) so runs are reproducible, and
each dataset carries analytic mean / variance / median-interval / MAD so the
training diagnostics can be checked against exact values instead of figures.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

DATASET_KINDS = ("ring8", "two_delta", "hetero_gaussian", "cond_bimodal")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n_train: int = 10000
    n_val: int = 1000
    n_test: int = 1000
    seed: int = 0
    # ring8
    radius: float = 2.0
    mode_std: float = 0.05
    # cond_bimodal
    gap: float = 1.0
    comp_std: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if min(self.n_train, self.n_val, self.n_test) <= 0:
            raise ValueError("all split counts must be positive")
        if self.radius <= 0 or self.mode_std < 0 or self.gap <= 0 or self.comp_std < 0:
            raise ValueError("dataset parameters out of range")

    @property
    def dx(self) -> int:
        return 0 if self.kind == "ring8" else 1

    @property
    def dy(self) -> int:
        return 2 if self.kind == "ring8" else 1


@dataclass
class Batch:
    x: np.ndarray  # (n, dx); dx == 0 for unconditional data
    y: np.ndarray  # (n, dy)

    def __post_init__(self) -> None:
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"row counts differ: {self.x.shape[0]} vs {self.y.shape[0]}")

    def __len__(self) -> int:
        return self.y.shape[0]

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class AnalyticMoments:
    """Closed-form conditional moments as functions of scalar x."""

    mean: Callable[[float], float]
    variance: Callable[[float], float]
    median_interval: Callable[[float], tuple[float, float]]
    mad: Callable[[float], float]


def ring8_centers(radius: float = 2.0) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_ring8(spec: DatasetSpec, rng: np.random.Generator, n: int) -> Batch:
    """Unconditional mixture of 8 equiprobable Gaussians on a circle."""
    centers = ring8_centers(spec.radius)
    modes = rng.integers(0, 8, size=n)
    y = centers[modes] + spec.mode_std * rng.standard_normal((n, 2))
    return Batch(np.zeros((n, 0)), y)


def make_two_delta(spec: DatasetSpec, rng: np.random.Generator, n: int) -> Batch:
    """y is -1 or +1 with probability 1/2, independent of the dummy x."""
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = rng.choice([-1.0, 1.0], size=(n, 1))
    return Batch(x, y)


def hetero_sigma(x: np.ndarray) -> np.ndarray:
    return 0.1 + 0.4 * x**2


def make_hetero_gaussian(spec: DatasetSpec, rng: np.random.Generator, n: int) -> Batch:
    """y | x ~ N(sin(pi x), sigma(x)^2) with sigma(x) = 0.1 + 0.4 x^2."""
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = np.sin(np.pi * x) + hetero_sigma(x) * rng.standard_normal((n, 1))
    return Batch(x, y)


def make_cond_bimodal(spec: DatasetSpec, rng: np.random.Generator, n: int) -> Batch:
    """y | x ~ half N(+g, s^2) + half N(-g, s^2); x carries no information."""
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    signs = rng.choice([-1.0, 1.0], size=(n, 1))
    y = signs * spec.gap + spec.comp_std * rng.standard_normal((n, 1))
    return Batch(x, y)


_MAKERS = {
    "ring8": make_ring8,
    "two_delta": make_two_delta,
    "hetero_gaussian": make_hetero_gaussian,
    "cond_bimodal": make_cond_bimodal,
}


def make_batch(spec: DatasetSpec, rng: np.random.Generator, n: int) -> Batch:
    return _MAKERS[spec.kind](spec, rng, n)


def make_splits(spec: DatasetSpec) -> tuple[Batch, Batch, Batch]:
    """(train, val, test) batches, deterministic given spec.seed."""
    rng = np.random.default_rng(spec.seed)
    return (
        make_batch(spec, rng, spec.n_train),
        make_batch(spec, rng, spec.n_val),
        make_batch(spec, rng, spec.n_test),
    )


def analytic_moments(spec: DatasetSpec) -> AnalyticMoments:
    if spec.kind == "two_delta":
        return AnalyticMoments(
            mean=lambda x: 0.0,
            variance=lambda x: 1.0,
            median_interval=lambda x: (-1.0, 1.0),
            mad=lambda x: 1.0,
        )
    if spec.kind == "hetero_gaussian":
        return AnalyticMoments(
            mean=lambda x: float(np.sin(np.pi * x)),
            variance=lambda x: float(hetero_sigma(np.asarray(x)) ** 2),
            median_interval=lambda x: (float(np.sin(np.pi * x)),) * 2,
            mad=lambda x: float(hetero_sigma(np.asarray(x)) * np.sqrt(2.0 / np.pi)),
        )
    if spec.kind == "cond_bimodal":
        g, s = spec.gap, spec.comp_std
        # E|y| for the symmetric two-component mixture (median is 0)
        mad = float(
            g * (1.0 - 2.0 * _norm_cdf(-g / s)) + 2.0 * s * _norm_pdf(g / s)
        ) if s > 0 else g
        return AnalyticMoments(
            mean=lambda x: 0.0,
            variance=lambda x: g * g + s * s,
            median_interval=lambda x: (-g, g),
            mad=lambda x: mad,
        )
    raise ValueError(f"no conditional moments for {spec.kind!r}")


def _norm_pdf(t: float) -> float:
    return float(np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi))


def _norm_cdf(t: float) -> float:
    from math import erf, sqrt

    return 0.5 * (1.0 + erf(t / sqrt(2.0)))


def split(batch: Batch, fractions: tuple[float, float, float], rng: np.random.Generator):
    """Disjoint shuffled partition of one batch; fractions must sum to 1."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    n = len(batch)
    perm = rng.permutation(n)
    n1 = int(round(fractions[0] * n))
    n2 = int(round(fractions[1] * n))
    return (
        batch.take(perm[:n1]),
        batch.take(perm[n1 : n1 + n2]),
        batch.take(perm[n1 + n2 :]),
    )


def dump_csv(batch: Batch, path) -> None:
    """Columns x0..x{dx-1}, y0..y{dy-1}; '.' decimals, LF endings, UTF-8."""
    dx, dy = batch.x.shape[1], batch.y.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(dx)] + [f"y{i}" for i in range(dy)])
        for xi, yi in zip(batch.x, batch.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
