"""Finite-difference verification of every tape op and every generator loss.

Kinked ops (abs, leaky_relu, median, clamp) are checked with inputs nudged at
least 1e-3 away from their kinks. For the median-based losses the per-sample
targets are detached constants by construction, so the check freezes the
targets at the unperturbed parameters; the tape gradient of the real loss at
that point is identical to the gradient of the frozen-target loss, which is
what central differences can measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses, nets
from . import tensor as T
from .losses import Variant
from .nets import MLPSpec
from .tensor import Tensor, finite_diff_check

OP_THRESHOLD = 1e-6
LOSS_THRESHOLD = 1e-3
FD_STEP = 1e-5


@dataclass
class CheckItem:
    name: str
    max_rel_error: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= self.threshold


def _nudged(rng: np.random.Generator, shape, away_from_zero: bool = False) -> np.ndarray:
    a = rng.standard_normal(shape)
    if away_from_zero:
        a = np.where(np.abs(a) < 1e-3, np.sign(a) * 1e-3 + a, a)
    return a


def _op_items(rng: np.random.Generator) -> list[CheckItem]:
    a0 = _nudged(rng, (3, 4), away_from_zero=True)
    b0 = _nudged(rng, (3, 4), away_from_zero=True)
    pos0 = np.abs(rng.standard_normal((3, 4))) + 0.5
    m0 = rng.standard_normal((3, 2))
    n0 = rng.standard_normal((2, 4))
    scal0 = rng.standard_normal((1, 1))
    row0 = rng.standard_normal((1, 4))

    a, b, pos = Tensor(a0), Tensor(b0), Tensor(pos0)
    ma, mb = Tensor(m0), Tensor(n0)
    scal, row = Tensor(scal0), Tensor(row0)
    # K tensors with pairwise-separated entries so FD never crosses an order change
    meds = [Tensor(rng.standard_normal((2, 3)) + 0.1 * i) for i in range(5)]

    cases: list[tuple[str, Callable[[], Tensor], list[Tensor]]] = [
        ("neg", lambda: T.mean(T.neg(a)), [a]),
        ("square", lambda: T.mean(T.square(a)), [a]),
        ("abs", lambda: T.mean(T.absval(a)), [a]),
        ("log", lambda: T.mean(T.log(pos)), [pos]),
        ("exp", lambda: T.mean(T.exp(a)), [a]),
        ("tanh", lambda: T.mean(T.tanh(a)), [a]),
        ("sigmoid", lambda: T.mean(T.sigmoid(a)), [a]),
        ("leaky_relu", lambda: T.mean(T.leaky_relu(a, 0.2)), [a]),
        ("add", lambda: T.mean(T.square(T.add(a, b))), [a, b]),
        ("sub", lambda: T.mean(T.square(T.sub(a, b))), [a, b]),
        ("mul", lambda: T.mean(T.mul(a, b)), [a, b]),
        ("div", lambda: T.mean(T.div(a, pos)), [a, pos]),
        ("scalar_broadcast", lambda: T.mean(T.square(T.mul(a, scal))), [a, scal]),
        ("matmul", lambda: T.mean(T.square(T.matmul(ma, mb))), [ma, mb]),
        ("mean", lambda: T.square(T.mean(a)), [a]),
        ("sum", lambda: T.square(T.mul(T.tsum(a), 0.01)), [a]),
        ("concat", lambda: T.mean(T.square(T.concat(a, b, axis=1))), [a, b]),
        ("add_rowvec", lambda: T.mean(T.square(T.add_rowvec(a, row))), [a, row]),
        ("take_rows", lambda: T.mean(T.square(T.take_rows(a, np.array([0, 2, 1, 0])))), [a]),
        ("take_cols", lambda: T.mean(T.square(T.take_cols(a, 1, 3))), [a]),
        ("median_of", lambda: T.mean(T.square(T.median_of(meds))), list(meds)),
        ("clamp_min", lambda: T.mean(T.square(T.clamp_min(a, 0.0))), [a]),
        ("clip", lambda: T.mean(T.square(T.clip(a, -0.9, 0.9))), [a]),
    ]
    return [
        CheckItem(name, finite_diff_check(fn, params, FD_STEP), OP_THRESHOLD)
        for name, fn, params in cases
    ]


def _loss_items(rng: np.random.Generator) -> list[CheckItem]:
    dx, dy, nz, k = 2, 2, 3, 4
    g = nets.mlp_init(MLPSpec(dx + nz, (8, 8, 8), dy), rng)
    d = nets.mlp_init(MLPSpec(dx + dy, (8, 8, 8), 1, output_activation="sigmoid"), rng)
    p = nets.mlp_init(MLPSpec(dx, (8, 8, 8), 2 * dy), rng)
    n = 3
    x_np = rng.standard_normal((n, dx))
    z_np = rng.standard_normal((n * k, nz))
    y_np = rng.standard_normal((n, dy))
    x, y = Tensor(x_np), Tensor(y_np)
    x_rep = Tensor(np.repeat(x_np, k, axis=0))

    def make_samples() -> tuple[list[Tensor], Tensor]:
        y_all = nets.generator_forward(g, x_rep, Tensor(z_np))
        return [T.take_rows(y_all, np.arange(n) * k + i) for i in range(k)], y_all

    def objective(variant: Variant) -> Callable[[], Tensor]:
        def fn() -> Tensor:
            samples, y_all = make_samples()
            gan = losses.gan_g_loss_stacked(d, x_rep, y_all)
            pred = nets.predictor_forward(p, x, variant.family) if variant.needs_predictor else None
            aux = losses.aux_loss(variant, samples, y, pred)
            rec = None
            if variant.recon_p is not None:
                parts = [losses.recon_loss(variant.recon_p, s, y) for s in samples]
                rec = T.div(parts[0] if len(parts) == 1 else sum(parts[1:], parts[0]), float(k))
            return losses.generator_objective(gan, 10.0, aux, 5.0, rec)

        return fn

    def frozen_laplace_objective(variant: Variant) -> Callable[[], Tensor]:
        # capture detach-trick targets at the unperturbed parameters
        samples0, _ = make_samples()
        est0 = losses.sample_median_mad(samples0)
        if variant.needs_predictor:
            pred0 = nets.predictor_forward(p, x, "laplace")
            shift0 = pred0.location.data - est0.location.data
        else:
            shift0 = y_np - est0.location.data
        targets0 = [Tensor(s.data + shift0) for s in samples0]

        def fn() -> Tensor:
            samples, y_all = make_samples()
            gan = losses.gan_g_loss_stacked(d, x_rep, y_all)
            per = None
            for t0, s in zip(targets0, samples):
                diff = T.sub(t0, s)
                term = T.square(diff) if variant.needs_predictor else T.absval(diff)
                per = term if per is None else T.add(per, term)
            per = T.div(per, float(k))
            if variant.n_moments == 2:
                est = losses.sample_median_mad(samples)
                if variant.needs_predictor:
                    b_hat = Tensor(nets.predictor_forward(p, x, "laplace").dispersion.data)
                    aux = T.add(T.mean(per), T.mean(T.square(T.sub(b_hat, est.dispersion))))
                else:
                    aux = T.mean(T.add(T.div(per, est.dispersion), T.log(est.dispersion)))
            else:
                aux = T.mean(per)
            return losses.generator_objective(gan, 10.0, aux)

        return fn

    items = []
    for variant in Variant:
        if variant is Variant.MLE_ONLY:
            # MLE objective is the predictor loss; check it over predictor params
            def mle_fn() -> Tensor:
                out = nets.predictor_forward(p, x, "gaussian")
                est = losses.MomentEstimate("gaussian", out.location, out.dispersion)
                return losses.gaussian_mle_loss(est, y)

            err = finite_diff_check(mle_fn, p.parameters(), FD_STEP)
        elif variant.family == "laplace":
            err = finite_diff_check(frozen_laplace_objective(variant), g.parameters(), FD_STEP)
        else:
            err = finite_diff_check(objective(variant), g.parameters(), FD_STEP)
        items.append(CheckItem(f"loss_{variant.value}", err, LOSS_THRESHOLD))
    return items


def run_gradcheck(seed: int = 0) -> list[CheckItem]:
    rng = np.random.default_rng(seed)
    return _op_items(rng) + _loss_items(rng)
