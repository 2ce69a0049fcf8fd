"""Generator objectives: reconstruction, MLE, moment-matching and GAN losses.

Sample statistics over K generated samples stay differentiable w.r.t. every
sample. For the median-based (Laplace) losses the gradient of the median only
touches the middle order statistic, so those losses rebuild per-sample targets
t_i = stop(y~_i + (target - m~)) and penalize |t_i - y~_i| instead; the loss
value is unchanged but every sample receives gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from . import tensor as T
from .nets import Network, PredictorOutput, discriminator_forward
from .tensor import ShapeError, Tensor

DISPERSION_FLOOR = 1e-6
D_OUTPUT_CLAMP = 1e-7


class Variant(str, Enum):
    GAN_ONLY = "gan_only"
    GAN_L1 = "gan_l1"
    GAN_L2 = "gan_l2"
    MLE_ONLY = "mle_only"
    G_MR1 = "g_mr1"
    G_MR2 = "g_mr2"
    L_MR1 = "l_mr1"
    L_MR2 = "l_mr2"
    G_PMR1 = "g_pmr1"
    G_PMR2 = "g_pmr2"
    L_PMR1 = "l_pmr1"
    L_PMR2 = "l_pmr2"

    @property
    def family(self) -> str | None:
        if self.value.startswith("g_"):
            return "gaussian"
        if self.value.startswith("l_"):
            return "laplace"
        return None

    @property
    def n_moments(self) -> int | None:
        return int(self.value[-1]) if self.value[-1] in "12" else None

    @property
    def needs_predictor(self) -> bool:
        return "pmr" in self.value

    @property
    def needs_samples(self) -> bool:
        return "mr" in self.value

    @property
    def recon_p(self) -> int | None:
        if self is Variant.GAN_L1:
            return 1
        if self is Variant.GAN_L2:
            return 2
        return None


@dataclass
class MomentEstimate:
    """(location, dispersion) under a distribution family tag."""

    family: str  # gaussian | laplace
    location: Tensor  # mean or median
    dispersion: Tensor  # variance or MAD, floored at DISPERSION_FLOOR


# ---------------------------------------------------------------------------
# Reconstruction and MLE losses


def recon_loss(p: int, y_hat: Tensor, y: Tensor) -> Tensor:
    """Mean over entries of |y - y_hat|^p, p in {1, 2}."""
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if y_hat.shape != y.shape:
        raise ShapeError(f"recon_loss: shapes {y_hat.shape} vs {y.shape}")
    diff = T.sub(y, y_hat)
    return T.mean(T.absval(diff) if p == 1 else T.square(diff))


def gaussian_mle_loss(est: MomentEstimate, y: Tensor) -> Tensor:
    """Mean of (y - mu)^2 / (2 sigma^2) + log(sigma^2) / 2."""
    if est.family != "gaussian":
        raise ValueError(f"expected gaussian estimate, got {est.family}")
    if est.location.shape != y.shape:
        raise ShapeError(f"gaussian_mle_loss: shapes {est.location.shape} vs {y.shape}")
    var = T.clamp_min(est.dispersion, DISPERSION_FLOOR)
    sq = T.square(T.sub(y, est.location))
    return T.mean(T.add(T.div(sq, T.mul(2.0, var)), T.mul(0.5, T.log(var))))


def laplace_mle_loss(est: MomentEstimate, y: Tensor) -> Tensor:
    """Mean of |y - m| / b + log b."""
    if est.family != "laplace":
        raise ValueError(f"expected laplace estimate, got {est.family}")
    if est.location.shape != y.shape:
        raise ShapeError(f"laplace_mle_loss: shapes {est.location.shape} vs {y.shape}")
    b = T.clamp_min(est.dispersion, DISPERSION_FLOOR)
    return T.mean(T.add(T.div(T.absval(T.sub(y, est.location)), b), T.log(b)))


# ---------------------------------------------------------------------------
# Sample statistics


def _check_samples(samples: Sequence[Tensor]) -> int:
    k = len(samples)
    if k < 2:
        raise ValueError(f"need K >= 2 samples, got {k}")
    return k


def sample_mean_var(samples: Sequence[Tensor]) -> MomentEstimate:
    """Differentiable sample mean and unbiased (K-1) sample variance."""
    k = _check_samples(samples)
    total = samples[0]
    for s in samples[1:]:
        total = T.add(total, s)
    mu = T.div(total, float(k))
    sq_sum = None
    for s in samples:
        sq = T.square(T.sub(s, mu))
        sq_sum = sq if sq_sum is None else T.add(sq_sum, sq)
    var = T.clamp_min(T.div(sq_sum, float(k - 1)), DISPERSION_FLOOR)
    return MomentEstimate("gaussian", mu, var)


def sample_median_mad(samples: Sequence[Tensor]) -> MomentEstimate:
    """Differentiable per-coordinate median and mean absolute deviation."""
    k = _check_samples(samples)
    med = T.median_of(samples)
    abs_sum = None
    for s in samples:
        a = T.absval(T.sub(s, med))
        abs_sum = a if abs_sum is None else T.add(abs_sum, a)
    mad = T.clamp_min(T.div(abs_sum, float(k)), DISPERSION_FLOOR)
    return MomentEstimate("laplace", med, mad)


# ---------------------------------------------------------------------------
# Moment reconstruction losses


def mr_loss_gaussian(n_moments: int, samples: Sequence[Tensor], y: Tensor) -> Tensor:
    est = sample_mean_var(samples)
    if n_moments == 1:
        return T.mean(T.square(T.sub(y, est.location)))
    if n_moments == 2:
        sq = T.square(T.sub(y, est.location))
        return T.mean(
            T.add(T.div(sq, T.mul(2.0, est.dispersion)), T.mul(0.5, T.log(est.dispersion)))
        )
    raise ValueError(f"n_moments must be 1 or 2, got {n_moments}")


def _shifted_targets(samples: Sequence[Tensor], shift: Tensor) -> list[Tensor]:
    """t_i = stop(y~_i + shift): constants carrying the median discrepancy."""
    return [T.gradient_stop(T.add(s, shift)) for s in samples]


def mr_loss_laplace(n_moments: int, samples: Sequence[Tensor], y: Tensor) -> Tensor:
    if n_moments not in (1, 2):
        raise ValueError(f"n_moments must be 1 or 2, got {n_moments}")
    k = _check_samples(samples)
    est = sample_median_mad(samples)
    targets = _shifted_targets(samples, T.sub(y, est.location))
    abs_sum = None
    for t, s in zip(targets, samples):
        a = T.absval(T.sub(t, s))
        abs_sum = a if abs_sum is None else T.add(abs_sum, a)
    per_sample = T.div(abs_sum, float(k))
    if n_moments == 1:
        return T.mean(per_sample)
    # MAD term is NOT gradient-stopped: b~ keeps its own path to the samples
    return T.mean(T.add(T.div(per_sample, est.dispersion), T.log(est.dispersion)))


def pmr_loss_gaussian(n_moments: int, samples: Sequence[Tensor], pred: PredictorOutput) -> Tensor:
    if pred.family != "gaussian":
        raise ValueError(f"expected gaussian predictor output, got {pred.family}")
    if n_moments not in (1, 2):
        raise ValueError(f"n_moments must be 1 or 2, got {n_moments}")
    est = sample_mean_var(samples)
    mu_hat = T.gradient_stop(pred.location)
    loss = T.mean(T.square(T.sub(mu_hat, est.location)))
    if n_moments == 2:
        var_hat = T.gradient_stop(pred.dispersion)
        loss = T.add(loss, T.mean(T.square(T.sub(var_hat, est.dispersion))))
    return loss


def pmr_loss_laplace(n_moments: int, samples: Sequence[Tensor], pred: PredictorOutput) -> Tensor:
    if pred.family != "laplace":
        raise ValueError(f"expected laplace predictor output, got {pred.family}")
    if n_moments not in (1, 2):
        raise ValueError(f"n_moments must be 1 or 2, got {n_moments}")
    k = _check_samples(samples)
    est = sample_median_mad(samples)
    m_hat = T.gradient_stop(pred.location)
    targets = _shifted_targets(samples, T.sub(m_hat, est.location))
    sq_sum = None
    for t, s in zip(targets, samples):
        sq = T.square(T.sub(t, s))  # squared per-sample term, unlike the MR loss
        sq_sum = sq if sq_sum is None else T.add(sq_sum, sq)
    loss = T.mean(T.div(sq_sum, float(k)))
    if n_moments == 2:
        b_hat = T.gradient_stop(pred.dispersion)
        loss = T.add(loss, T.mean(T.square(T.sub(b_hat, est.dispersion))))
    return loss


# ---------------------------------------------------------------------------
# GAN losses


def _log_d(d: Network, x: Tensor | None, y: Tensor) -> Tensor:
    return T.log(T.clip(discriminator_forward(d, x, y), D_OUTPUT_CLAMP, 1.0 - D_OUTPUT_CLAMP))


def gan_d_loss(d: Network, x: Tensor | None, y_real: Tensor, y_fake: Tensor) -> Tensor:
    """-log D(x, y_real) - log(1 - D(x, y_fake)); caller stops y_fake's gradient."""
    real_term = T.mean(_log_d(d, x, y_real))
    p_fake = T.clip(discriminator_forward(d, x, y_fake), D_OUTPUT_CLAMP, 1.0 - D_OUTPUT_CLAMP)
    fake_term = T.mean(T.log(T.sub(1.0, p_fake)))
    return T.neg(T.add(real_term, fake_term))


def gan_g_loss(d: Network, x: Tensor | None, samples: Sequence[Tensor]) -> Tensor:
    """Non-saturating generator term: (1/K) sum_i mean(-log D(x, y~_i))."""
    total = None
    for s in samples:
        term = T.neg(T.mean(_log_d(d, x, s)))
        total = term if total is None else T.add(total, term)
    return T.div(total, float(len(samples)))


def gan_g_loss_stacked(d: Network, x_rep: Tensor | None, y_all: Tensor) -> Tensor:
    """Same value as gan_g_loss when y_all stacks all K samples row-wise."""
    return T.neg(T.mean(_log_d(d, x_rep, y_all)))


# ---------------------------------------------------------------------------
# Combined generator objective


def aux_loss(
    variant: Variant,
    samples: Sequence[Tensor] | None,
    y: Tensor | None,
    pred: PredictorOutput | None,
) -> Tensor | None:
    """The variant's moment-matching term, or None for pure GAN baselines."""
    if not variant.needs_samples:
        return None
    if variant.needs_predictor:
        if pred is None:
            raise ValueError(f"{variant.value} requires a pretrained predictor")
        if variant.family == "gaussian":
            return pmr_loss_gaussian(variant.n_moments, samples, pred)
        return pmr_loss_laplace(variant.n_moments, samples, pred)
    if variant.family == "gaussian":
        return mr_loss_gaussian(variant.n_moments, samples, y)
    return mr_loss_laplace(variant.n_moments, samples, y)


def generator_objective(
    gan_term: Tensor,
    lambda_aux: float,
    aux_term: Tensor | None,
    lambda_rec: float = 0.0,
    rec_term: Tensor | None = None,
) -> Tensor:
    """L_GAN + lambda_aux * L_aux + lambda_rec * L_rec (GAN weight fixed to 1)."""
    total = gan_term
    if aux_term is not None and lambda_aux != 0.0:
        total = T.add(total, T.mul(lambda_aux, aux_term))
    if rec_term is not None and lambda_rec != 0.0:
        total = T.add(total, T.mul(lambda_rec, rec_term))
    return total
