"""Quantitative diagnostics: mode coverage, moment errors, diversity, the
symmetric-loss error decomposition and the l1-minimizer brute-force scan."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .data import DatasetSpec, analytic_moments, ring8_centers
from .tensor import Tensor


@dataclass
class ModeCoverageReport:
    modes_captured: int
    mode_shares: np.ndarray  # fraction of samples assigned to each center and within 3 sigma
    high_quality_fraction: float


@dataclass
class MomentErrorReport:
    mean_abs_err: float
    var_rel_err: float
    median_err: float | None = None
    mad_rel_err: float | None = None


@dataclass
class DecompositionReport:
    var_y: float
    se: float
    ve: float
    total: float

    @property
    def identity_residual(self) -> float:
        return abs(self.total - (self.var_y + self.se + self.ve))


def mode_coverage(
    samples: np.ndarray,
    centers: np.ndarray,
    mode_std: float,
    capture_share: float = 0.02,
) -> ModeCoverageReport:
    """A mode counts as captured when >= capture_share of samples land within
    3*mode_std of that (nearest) center."""
    n = samples.shape[0]
    if n < 1000:
        raise ValueError(f"need at least 1000 samples, got {n}")
    dists = np.linalg.norm(samples[:, None, :] - centers[None, :, :], axis=2)
    nearest = dists.argmin(axis=1)
    close = dists[np.arange(n), nearest] <= 3.0 * mode_std
    shares = np.bincount(nearest[close], minlength=centers.shape[0]) / n
    return ModeCoverageReport(
        modes_captured=int((shares >= capture_share).sum()),
        mode_shares=shares,
        high_quality_fraction=float(close.mean()),
    )


def conditional_moment_error(
    g: nets.Network,
    spec: DatasetSpec,
    x_grid: np.ndarray,
    k_eval: int = 200,
    rng: np.random.Generator | None = None,
    noise_dim: int = 8,
) -> MomentErrorReport:
    """Grid-averaged |sample mean - analytic mean| and relative variance error."""
    rng = rng or np.random.default_rng(0)
    am = analytic_moments(spec)
    mean_errs, var_errs, med_errs, mad_errs = [], [], [], []
    for xv in np.atleast_1d(x_grid):
        ys = sample_generator(g, float(xv), k_eval, noise_dim, rng, conditional=spec.dx > 0)
        mu, var = ys.mean(), ys.var(ddof=1)
        med = float(np.median(ys))
        mad = float(np.abs(ys - med).mean())
        mean_errs.append(abs(mu - am.mean(xv)))
        var_errs.append(abs(var - am.variance(xv)) / max(am.variance(xv), 1e-12))
        lo, hi = am.median_interval(xv)
        med_errs.append(max(lo - med, med - hi, 0.0))
        mad_errs.append(abs(mad - am.mad(xv)) / max(am.mad(xv), 1e-12))
    return MomentErrorReport(
        mean_abs_err=float(np.mean(mean_errs)),
        var_rel_err=float(np.mean(var_errs)),
        median_err=float(np.mean(med_errs)),
        mad_rel_err=float(np.mean(mad_errs)),
    )


def sample_generator(
    g: nets.Network,
    x_value: float | None,
    n: int,
    noise_dim: int,
    rng: np.random.Generator,
    conditional: bool = True,
) -> np.ndarray:
    """n forward samples at a fixed condition, tape-free."""
    z = Tensor(rng.standard_normal((n, noise_dim)))
    if conditional and x_value is not None:
        x = Tensor(np.full((n, 1), x_value))
        return nets.generator_forward(g, x, z).data
    return nets.generator_forward(g, None, z).data


def grid_sample_variance(
    g: nets.Network,
    x_grid: np.ndarray,
    k_eval: int,
    noise_dim: int,
    rng: np.random.Generator,
) -> float:
    """Average over grid x of the per-x sample variance of G(x, z)."""
    vs = []
    for xv in np.atleast_1d(x_grid):
        ys = sample_generator(g, float(xv), k_eval, noise_dim, rng)
        vs.append(ys.var(ddof=1, axis=0).mean())
    return float(np.mean(vs))


def pairwise_diversity(samples: np.ndarray) -> float:
    """Mean Euclidean distance over all sample pairs (the LPIPS stand-in)."""
    k = samples.shape[0]
    if k < 2:
        raise ValueError(f"need K >= 2 samples, got {k}")
    diffs = samples[:, None, :] - samples[None, :, :]
    d = np.linalg.norm(diffs, axis=2)
    iu = np.triu_indices(k, 1)
    return float(d[iu].mean())


def se_ve_decomposition(y: np.ndarray, y_hat: np.ndarray) -> DecompositionReport:
    """Finite-sample all-pairs decomposition of the squared error.

    total = (1/nm) sum_ij (y_i - yhat_j)^2 splits exactly into the biased
    variance of y, the squared mean gap, and the biased variance of yhat.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size < 2 or y_hat.size < 2:
        raise ValueError("need at least 2 draws on each side")
    var_y = float(y.var())
    ve = float(y_hat.var())
    se = float((y_hat.mean() - y.mean()) ** 2)
    total = float(((y[:, None] - y_hat[None, :]) ** 2).mean())
    return DecompositionReport(var_y=var_y, se=se, ve=ve, total=total)


def l1_minimizer_scan(
    values: np.ndarray,
    probs: np.ndarray,
    grid: np.ndarray,
    tol: float = 1e-12,
) -> tuple[np.ndarray, tuple[float, float], float]:
    """Brute-force argmin_c E|y - c| over a grid, plus the analytic median interval.

    Returns (grid points attaining the minimum within tol, (lo, hi), min value).
    """
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {probs.sum()}, expected 1")
    grid = np.asarray(grid, dtype=np.float64)
    losses = (probs[None, :] * np.abs(grid[:, None] - values[None, :])).sum(axis=1)
    lo_v = losses.min()
    argmin = grid[losses <= lo_v + tol]

    order = np.argsort(values, kind="stable")
    v_sorted, p_sorted = values[order], probs[order]
    cdf = np.cumsum(p_sorted)
    # [a, b]: a is the first point with CDF >= 1/2, b the last point with
    # CDF(left of it) <= 1/2
    a = v_sorted[np.searchsorted(cdf, 0.5 - 1e-12)]
    left_cdf = cdf - p_sorted
    b = v_sorted[np.nonzero(left_cdf <= 0.5 + 1e-12)[0][-1]]
    return argmin, (float(a), float(b)), float(lo_v)
