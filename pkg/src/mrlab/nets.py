"""MLP generator, discriminator and moment-predictor networks.

All three roles share one plain fully-connected architecture; they differ only
in how inputs are assembled (noise concatenation for the generator, an (x, y)
pair for the discriminator) and how outputs are read (sigmoid probability for
the discriminator, location + log-dispersion heads for the predictor).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "leaky_relu"  # leaky_relu | tanh
    leaky_slope: float = 0.2
    output_activation: str = "linear"  # linear | sigmoid | tanh

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("all dims must be >= 1")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValueError("at least one hidden layer of width >= 1 required")
        if self.hidden_activation not in ("leaky_relu", "tanh"):
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("linear", "sigmoid", "tanh"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self) -> int:
        return sum((fin + 1) * fout for fin, fout in self.layer_dims())


@dataclass
class Network:
    spec: MLPSpec
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class PredictorOutput:
    """Location / dispersion heads of a moment predictor.

    ``dispersion`` is exp(log_dispersion), hence strictly positive.
    """

    location: Tensor
    log_dispersion: Tensor
    family: str  # gaussian | laplace

    @property
    def dispersion(self) -> Tensor:
        return T.exp(self.log_dispersion)


def mlp_init(spec: MLPSpec, rng: np.random.Generator) -> Network:
    """Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases."""
    net = Network(spec)
    for fin, fout in spec.layer_dims():
        bound = np.sqrt(6.0 / fin)
        net.weights.append(Tensor(rng.uniform(-bound, bound, size=(fin, fout))))
        net.biases.append(Tensor(np.zeros((1, fout))))
    return net


def mlp_forward(net: Network, x: Tensor) -> Tensor:
    if x.shape[1] != net.spec.input_dim:
        raise ShapeError(f"expected input dim {net.spec.input_dim}, got {x.shape[1]}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = T.add_rowvec(T.matmul(h, w), b)
        if i < last:
            if net.spec.hidden_activation == "leaky_relu":
                h = T.leaky_relu(h, net.spec.leaky_slope)
            else:
                h = T.tanh(h)
    if net.spec.output_activation == "sigmoid":
        h = T.sigmoid(h)
    elif net.spec.output_activation == "tanh":
        h = T.tanh(h)
    return h


def generator_forward(g: Network, x: Tensor | None, z: Tensor) -> Tensor:
    """y~ = G(concat(x, z)); pass x=None for unconditional generation."""
    inp = z if x is None else T.concat(x, z, axis=1)
    return mlp_forward(g, inp)


def generator_sample_k(
    g: Network,
    x: Tensor | None,
    k: int,
    noise_dim: int,
    rng: np.random.Generator,
) -> list[Tensor]:
    """K samples per conditioning row with i.i.d. z ~ N(0, I), all on one tape.

    Returns a list of K tensors, each shaped like one full batch; sample i of
    row j is entry j of list element i. Internally a single stacked forward
    pass is used so the per-step op count stays flat in K.
    """
    if k < 2:
        raise ValueError(f"K must be >= 2, got {k}")
    n = 1 if x is None else x.shape[0]
    z = Tensor(rng.standard_normal((n * k, noise_dim)))
    if x is None:
        y_all = generator_forward(g, None, z)
    else:
        x_rep = Tensor(np.repeat(x.data, k, axis=0))
        y_all = generator_forward(g, x_rep, z)
    return [T.take_rows(y_all, np.arange(n) * k + i) for i in range(k)]


def discriminator_forward(d: Network, x: Tensor | None, y: Tensor) -> Tensor:
    """Probability in (0,1) that (x, y) is a real pair; x omitted when unconditional."""
    if d.spec.output_activation != "sigmoid":
        raise ValueError("discriminator needs a sigmoid output layer")
    inp = y if x is None else T.concat(x, y, axis=1)
    return mlp_forward(d, inp)


def predictor_forward(p: Network, x: Tensor, family: str) -> PredictorOutput:
    """Split the doubled output head into location and log-dispersion."""
    if p.spec.output_dim % 2 != 0:
        raise ShapeError("predictor output_dim must be 2 x target_dim")
    out = mlp_forward(p, x)
    half = p.spec.output_dim // 2
    loc = T.take_cols(out, 0, half)
    logd = T.take_cols(out, half, p.spec.output_dim)
    return PredictorOutput(location=loc, log_dispersion=logd, family=family)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, net: Network, *, seed: int | None = None, step: int | None = None) -> None:
    """Parameter dump (.npz) with a JSON header recording the spec."""
    header = {
        "input_dim": net.spec.input_dim,
        "hidden_widths": list(net.spec.hidden_widths),
        "output_dim": net.spec.output_dim,
        "hidden_activation": net.spec.hidden_activation,
        "leaky_slope": net.spec.leaky_slope,
        "output_activation": net.spec.output_activation,
        "seed": seed,
        "step": step,
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w.data
        arrays[f"b{i}"] = b.data
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[Network, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        spec = MLPSpec(
            input_dim=header["input_dim"],
            hidden_widths=tuple(header["hidden_widths"]),
            output_dim=header["output_dim"],
            hidden_activation=header["hidden_activation"],
            leaky_slope=header["leaky_slope"],
            output_activation=header["output_activation"],
        )
        net = Network(spec)
        for i in range(len(spec.hidden_widths) + 1):
            net.weights.append(Tensor(data[f"w{i}"]))
            net.biases.append(Tensor(data[f"b{i}"]))
    return net, header
