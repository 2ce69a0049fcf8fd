"""AMSGrad optimizer with decoupled weight decay and value clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class DivergenceError(RuntimeError):
    """Raised when a gradient or loss turns non-finite."""


def clip_by_value(grad: np.ndarray, c: float) -> np.ndarray:
    if c <= 0:
        raise ValueError("clip value must be positive")
    return np.clip(grad, -c, c)


@dataclass
class AmsGrad:
    """Per-parameter AMSGrad state; step() mutates the parameter tensors in place.

    Update: m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; vhat <- max(vhat, v);
    theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(vhat) + eps), followed by
    decoupled decay theta <- theta * (1 - lr * wd).
    """

    params: list[Tensor]
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_value: float | None = None
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    vhat: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]
            self.vhat = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        corr = 1.0 - self.beta1**self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient for parameter {i} at step {self.t}")
            if self.clip_value is not None:
                g = clip_by_value(g, self.clip_value)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            np.maximum(self.vhat[i], self.v[i], out=self.vhat[i])
            p.data -= self.lr * (self.m[i] / corr) / (np.sqrt(self.vhat[i]) + self.eps)
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
