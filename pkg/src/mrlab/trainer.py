"""Training loops: predictor pretraining and the alternating GAN loop.

One run is single-threaded and fully determined by its config (the seed feeds
separate child generators for data synthesis, parameter init, noise draws and
evaluation sampling, so evaluation never perturbs the training stream).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses, metrics, nets
from . import tensor as T
from .config import TrainConfig
from .data import Batch, analytic_moments, make_splits, ring8_centers
from .losses import Variant
from .nets import MLPSpec, Network, PredictorOutput
from .optim import AmsGrad, DivergenceError
from .tensor import Tape, Tensor


@dataclass
class HistoryRow:
    step: int
    loss_d: float
    loss_g_gan: float
    loss_aux: float | None
    loss_rec: float | None
    modes_captured: int | None
    hq_fraction: float | None
    mean_abs_err: float | None
    var_rel_err: float | None
    diversity: float | None


@dataclass
class TrainResult:
    config: TrainConfig
    generator: Network | None
    discriminator: Network | None
    predictor: Network | None
    history: list[HistoryRow]
    status: str  # "ok" or "aborted@<step>"
    predictor_best_epoch: int | None = None
    val_curve: list[float] = field(default_factory=list)

    def sample(self, x_value: float | None, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n outputs at a fixed condition from the trained model."""
        cfg = self.config
        if self.generator is not None:
            return metrics.sample_generator(
                self.generator, x_value, n, cfg.noise_dim, rng,
                conditional=cfg.dataset_spec().dx > 0,
            )
        # MLE-only baseline: sample from the predicted distribution
        assert self.predictor is not None
        out = _predict(self.predictor, _predictor_input(x_value, n, cfg), cfg.mle_family)
        loc = out.location.data
        disp = out.dispersion.data
        if cfg.mle_family == "gaussian":
            return loc + np.sqrt(disp) * rng.standard_normal(loc.shape)
        return loc + rng.laplace(0.0, 1.0, size=loc.shape) * disp  # MAD b is the Laplace scale


def _predictor_input(x_value: float | None, n: int, cfg: TrainConfig) -> Tensor:
    dx = cfg.dataset_spec().dx
    if dx == 0:
        return Tensor(np.ones((n, 1)))
    return Tensor(np.full((n, dx), x_value))


def _predictor_x(x: np.ndarray) -> Tensor:
    # unconditional data gets a constant dummy input so P reduces to biases
    if x.shape[1] == 0:
        return Tensor(np.ones((x.shape[0], 1)))
    return Tensor(x)


def _predict(p: Network, x: Tensor, family: str) -> PredictorOutput:
    return nets.predictor_forward(p, x, family)


def predictor_spec(cfg: TrainConfig) -> MLPSpec:
    ds = cfg.dataset_spec()
    return MLPSpec(
        input_dim=max(ds.dx, 1),
        hidden_widths=cfg.hidden,
        output_dim=2 * ds.dy,
        hidden_activation=cfg.p_activation,
        leaky_slope=0.2,
    )


def generator_spec(cfg: TrainConfig) -> MLPSpec:
    ds = cfg.dataset_spec()
    return MLPSpec(
        input_dim=ds.dx + cfg.noise_dim,
        hidden_widths=cfg.hidden,
        output_dim=ds.dy,
        hidden_activation=cfg.g_activation,
    )


def discriminator_spec(cfg: TrainConfig) -> MLPSpec:
    ds = cfg.dataset_spec()
    return MLPSpec(
        input_dim=ds.dx + ds.dy,
        hidden_widths=cfg.hidden,
        output_dim=1,
        hidden_activation=cfg.d_activation,
        output_activation="sigmoid",
    )


def _mle_loss(out: PredictorOutput, y: Tensor) -> Tensor:
    est = losses.MomentEstimate(out.family, out.location, out.dispersion)
    if out.family == "gaussian":
        return losses.gaussian_mle_loss(est, y)
    return losses.laplace_mle_loss(est, y)


def train_predictor(
    train: Batch,
    val: Batch,
    cfg: TrainConfig,
    family: str,
    rng: np.random.Generator,
) -> tuple[Network, list[float], int]:
    """MLE training with early stopping on validation loss.

    Returns the checkpoint with the lowest validation loss, the per-epoch
    validation curve and the best epoch index.
    """
    p = nets.mlp_init(predictor_spec(cfg), rng)
    opt = AmsGrad(
        p.parameters(),
        lr=cfg.predictor_lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
        clip_value=cfg.clip_value,
    )
    n = len(train)
    batches_per_epoch = max(1, n // cfg.batch_d)
    val_x = _predictor_x(val.x)
    val_y = Tensor(val.y)

    best_loss = np.inf
    best_epoch = -1
    best_params: list[np.ndarray] = []
    val_curve: list[float] = []
    for epoch in range(cfg.predictor_max_epochs):
        perm = rng.permutation(n)
        for b in range(batches_per_epoch):
            idx = perm[b * cfg.batch_d : (b + 1) * cfg.batch_d]
            with Tape() as tape:
                out = _predict(p, _predictor_x(train.x[idx]), family)
                loss = _mle_loss(out, Tensor(train.y[idx]))
                if not np.isfinite(loss.item()):
                    raise DivergenceError(f"predictor loss diverged at epoch {epoch}")
                tape.backward(loss)
                opt.step([tape.grad(q) for q in p.parameters()])
        val_loss = _mle_loss(_predict(p, val_x, family), val_y).item()
        val_curve.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_params = [q.data.copy() for q in p.parameters()]
        elif epoch - best_epoch >= cfg.patience:
            break
    for q, saved in zip(p.parameters(), best_params):
        q.data[...] = saved
    return p, val_curve, best_epoch


def _sample_batch(batch: Batch, size: int, rng: np.random.Generator) -> Batch:
    idx = rng.integers(0, len(batch), size=size)
    return batch.take(idx)


def discriminator_update(
    d: Network,
    g: Network,
    batch: Batch,
    cfg: TrainConfig,
    opt: AmsGrad,
    rng: np.random.Generator,
) -> float:
    """One AMSGrad step on the discriminator; generator output is detached."""
    conditional = batch.x.shape[1] > 0
    x = Tensor(batch.x) if conditional else None
    z = Tensor(rng.standard_normal((len(batch), cfg.noise_dim)))
    y_fake = Tensor(nets.generator_forward(g, x, z).data)  # forward ran tape-free
    with Tape() as tape:
        loss = losses.gan_d_loss(d, x, Tensor(batch.y), y_fake)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError("discriminator loss diverged")
        tape.backward(loss)
        opt.step([tape.grad(q) for q in d.parameters()])
    return value


def generator_update(
    variant: Variant,
    g: Network,
    d: Network,
    p: Network | None,
    batch: Batch,
    cfg: TrainConfig,
    opt: AmsGrad,
    rng: np.random.Generator,
) -> tuple[float, float | None, float | None]:
    """One clipped AMSGrad step on the generator.

    Returns (gan_term, aux_term, rec_term) values for bookkeeping.
    """
    conditional = batch.x.shape[1] > 0
    n, k = len(batch), cfg.k
    with Tape() as tape:
        x = Tensor(batch.x) if conditional else None
        z = Tensor(rng.standard_normal((n * k, cfg.noise_dim)))
        x_rep = Tensor(np.repeat(batch.x, k, axis=0)) if conditional else None
        y_all = nets.generator_forward(g, x_rep, z)
        samples = [T.take_rows(y_all, np.arange(n) * k + i) for i in range(k)]
        y = Tensor(batch.y)

        gan_term = losses.gan_g_loss_stacked(d, x_rep, y_all)
        pred_out = None
        if variant.needs_predictor:
            if p is None:
                raise ValueError(f"{variant.value} needs a pretrained predictor")
            pred_out = _predict(p, _predictor_x(batch.x), variant.family)
        aux_term = losses.aux_loss(variant, samples, y, pred_out)

        rec_term = None
        if cfg.lambda_rec != 0.0 or variant.recon_p is not None:
            rp = variant.recon_p or cfg.recon_p
            rec_sum = None
            for s in samples:
                r = losses.recon_loss(rp, s, y)
                rec_sum = r if rec_sum is None else T.add(rec_sum, r)
            rec_term = T.div(rec_sum, float(k))

        total = losses.generator_objective(
            gan_term, cfg.lambda_aux, aux_term, cfg.lambda_rec, rec_term
        )
        if not np.isfinite(total.item()):
            raise DivergenceError("generator loss diverged")
        tape.backward(total)
        opt.step([tape.grad(q) for q in g.parameters()])
    return (
        gan_term.item(),
        aux_term.item() if aux_term is not None else None,
        rec_term.item() if rec_term is not None else None,
    )


def _evaluate(
    g_or_result,
    cfg: TrainConfig,
    step: int,
) -> dict:
    """Deterministic metrics snapshot (fresh rng keyed by seed and step)."""
    ds = cfg.dataset_spec()
    rng = np.random.default_rng((cfg.seed + 1) * 1_000_003 + step)
    out: dict = {
        "modes_captured": None,
        "hq_fraction": None,
        "mean_abs_err": None,
        "var_rel_err": None,
        "diversity": None,
    }
    sample = (
        g_or_result.sample
        if isinstance(g_or_result, TrainResult)
        else lambda xv, n, r: metrics.sample_generator(
            g_or_result, xv, n, cfg.noise_dim, r, conditional=ds.dx > 0
        )
    )
    if ds.kind == "ring8":
        ys = sample(None, 5000, rng)
        report = metrics.mode_coverage(ys, ring8_centers(ds.radius), ds.mode_std)
        out["modes_captured"] = report.modes_captured
        out["hq_fraction"] = report.high_quality_fraction
        out["diversity"] = metrics.pairwise_diversity(ys[:200])
    else:
        am = analytic_moments(ds)
        grid = np.linspace(-1.0, 1.0, 21)
        mean_errs, var_errs, divs = [], [], []
        for xv in grid:
            ys = sample(float(xv), 200, rng)
            mean_errs.append(abs(ys.mean() - am.mean(xv)))
            var_errs.append(abs(ys.var(ddof=1) - am.variance(xv)) / max(am.variance(xv), 1e-12))
            divs.append(metrics.pairwise_diversity(ys[:20]))
        out["mean_abs_err"] = float(np.mean(mean_errs))
        out["var_rel_err"] = float(np.mean(var_errs))
        out["diversity"] = float(np.mean(divs))
    return out


def train_gan(cfg: TrainConfig) -> TrainResult:
    """Run the full recipe for any variant; deterministic given cfg."""
    variant = cfg.variant_enum
    master = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng(master.integers(2**63))
    loop_rng = np.random.default_rng(master.integers(2**63))
    train, val, _test = make_splits(cfg.dataset_spec())

    predictor = None
    val_curve: list[float] = []
    best_epoch = None
    if variant.needs_predictor or variant is Variant.MLE_ONLY:
        family = variant.family or cfg.mle_family
        predictor, val_curve, best_epoch = train_predictor(train, val, cfg, family, init_rng)
        frozen = [q.data.copy() for q in predictor.parameters()]

    if variant is Variant.MLE_ONLY:
        result = TrainResult(cfg, None, None, predictor, [], "ok", best_epoch, val_curve)
        snap = _evaluate(result, cfg, cfg.steps)
        result.history.append(HistoryRow(step=0, loss_d=np.nan, loss_g_gan=np.nan,
                                         loss_aux=None, loss_rec=None, **snap))
        return result

    g = nets.mlp_init(generator_spec(cfg), init_rng)
    d = nets.mlp_init(discriminator_spec(cfg), init_rng)
    opt_kwargs = dict(
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
        clip_value=cfg.clip_value,
    )
    opt_g = AmsGrad(g.parameters(), **opt_kwargs)
    opt_d = AmsGrad(d.parameters(), **opt_kwargs)

    history: list[HistoryRow] = []
    status = "ok"
    loss_d = loss_gan = np.nan
    loss_aux = loss_rec = None
    g_step = 0
    try:
        while g_step < cfg.steps:
            for _ in range(cfg.d_steps):
                loss_d = discriminator_update(
                    d, g, _sample_batch(train, cfg.batch_d, loop_rng), cfg, opt_d, loop_rng
                )
            for _ in range(cfg.g_steps):
                if g_step >= cfg.steps:
                    break
                loss_gan, loss_aux, loss_rec = generator_update(
                    variant, g, d, predictor,
                    _sample_batch(train, cfg.batch_g, loop_rng), cfg, opt_g, loop_rng,
                )
                g_step += 1
                if g_step % cfg.eval_interval == 0 or g_step == cfg.steps:
                    snap = _evaluate(g, cfg, g_step)
                    history.append(HistoryRow(step=g_step, loss_d=loss_d, loss_g_gan=loss_gan,
                                              loss_aux=loss_aux, loss_rec=loss_rec, **snap))
    except DivergenceError as exc:
        status = f"aborted@{g_step}:{exc}"

    if predictor is not None:
        for q, saved in zip(predictor.parameters(), frozen):
            assert np.array_equal(q.data, saved), "predictor drifted during GAN training"
    return TrainResult(cfg, g, d, predictor, history, status, best_epoch, val_curve)
