"""Flat key=value experiment configuration with strict parsing.

One ``key = value`` per line, ``#`` comments, unknown keys rejected so typos
never silently fall back to defaults. ``serialize`` -> ``parse`` round-trips to
an equal config, which is what run manifests rely on.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .data import DATASET_KINDS, DatasetSpec
from .losses import Variant


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "gan_only"
    # dataset
    dataset: str = "ring8"
    n_train: int = 10000
    n_val: int = 1000
    n_test: int = 1000
    radius: float = 2.0
    mode_std: float = 0.05
    gap: float = 1.0
    comp_std: float = 0.1
    # optimizer
    lr: float = 1e-4
    predictor_lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 1e-4
    clip_value: float = 0.5
    # objective
    k: int = 10
    lambda_aux: float = 10.0
    lambda_rec: float = 0.0
    recon_p: int = 1
    mle_family: str = "gaussian"
    # loop
    batch_d: int = 64
    batch_g: int = 32
    d_steps: int = 1
    g_steps: int = 1
    steps: int = 20000
    eval_interval: int = 500
    # architecture
    noise_dim: int = 8
    hidden: tuple[int, ...] = (64, 64, 64)
    # hidden activations per role; piecewise-linear G/D pairs train best on the
    # synthetic GAN tasks (a tanh generator is odd in z at init and tends to get
    # stuck on centrally symmetric mode sets), while the smooth predictor
    # benefits from tanh when fitting sinusoidal location curves
    g_activation: str = "leaky_relu"
    d_activation: str = "leaky_relu"
    p_activation: str = "tanh"
    # predictor pretraining
    patience: int = 20
    predictor_max_epochs: int = 400
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in {v.value for v in Variant}:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.dataset not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.lr <= 0 or self.predictor_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.variant_enum.needs_samples and self.k < 2:
            raise ConfigError(f"k must be >= 2 for variant {self.variant}")
        if self.recon_p not in (1, 2):
            raise ConfigError("recon_p must be 1 or 2")
        if self.mle_family not in ("gaussian", "laplace"):
            raise ConfigError(f"unknown mle_family {self.mle_family!r}")
        for role, act in (("g", self.g_activation), ("d", self.d_activation),
                          ("p", self.p_activation)):
            if act not in ("leaky_relu", "tanh"):
                raise ConfigError(f"unknown {role}_activation {act!r}")
        if min(self.batch_d, self.batch_g, self.d_steps, self.g_steps, self.steps) < 1:
            raise ConfigError("loop counts must be >= 1")

    @property
    def variant_enum(self) -> Variant:
        return Variant(self.variant)

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(
            kind=self.dataset,
            n_train=self.n_train,
            n_val=self.n_val,
            n_test=self.n_test,
            seed=self.seed,
            radius=self.radius,
            mode_std=self.mode_std,
            gap=self.gap,
            comp_std=self.comp_std,
        )

    def content_hash(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:12]

    def run_id(self) -> str:
        return f"s{self.seed}-{self.content_hash()}"


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _parse_value(key: str, raw: str, line_no: int):
    ftype = _FIELDS[key].type
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "str":
            return raw
        if ftype.startswith("tuple"):
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: bad value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"line {line_no}: unsupported type for {key!r}")


def parse_string(text: str) -> TrainConfig:
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, line_no)
    try:
        return TrainConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_string(fh.read())


def serialize(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def override(cfg: TrainConfig, **changes) -> TrainConfig:
    current = {f.name: getattr(cfg, f.name) for f in fields(TrainConfig)}
    current.update(changes)
    return TrainConfig(**current)
