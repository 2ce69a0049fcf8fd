"""Dense rank-<=2 float64 tensors with reverse-mode autodiff on a dynamic tape.

Every value flowing through the networks and losses is a ``Tensor`` wrapping a
2-D numpy array (scalars are 1x1, vectors are 1xN row vectors). Operations
executed while a ``Tape`` is active append a backward rule to the tape; calling
``Tape.backward`` on a scalar loss replays the rules in exact reverse order.

Broadcasting is restricted to scalar-vs-tensor, plus the dedicated
``add_rowvec`` op used for bias addition.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


class NumericError(ArithmeticError):
    """Raised on domain violations (log of non-positive, near-zero divisor)."""


_DIV_GUARD = 1e-300


# ---------------------------------------------------------------------------
# Tape


class Tape:
    """Ordered record of operations for one forward pass.

    Use as a context manager around the forward computation, then call
    ``backward`` once. A second ``backward`` without re-recording raises.
    """

    def __init__(self) -> None:
        self._ops: list[tuple["Tensor", tuple["Tensor", ...], Callable]] = []
        self._consumed = False
        self._grads: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        assert _TAPE_STACK and _TAPE_STACK[-1] is self
        _TAPE_STACK.pop()

    def backward(self, loss: "Tensor") -> None:
        """Accumulate gradients of a scalar ``loss`` w.r.t. every antecedent."""
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
        if self._consumed:
            raise RuntimeError("tape already consumed; re-record the forward pass")
        self._consumed = True
        grads = self._grads
        grads[id(loss)] = np.ones((1, 1))
        for out, parents, rule in reversed(self._ops):
            g = grads.get(id(out))
            if g is None:
                continue
            for parent, pg in zip(parents, rule(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                if acc is None:
                    # copy: pg may alias the child gradient or a view of it
                    grads[id(parent)] = np.array(pg)
                else:
                    acc += pg

    def grad(self, t: "Tensor") -> np.ndarray:
        """Gradient of the last backward pass w.r.t. ``t`` (zeros if unreachable)."""
        if not self._consumed:
            raise RuntimeError("call backward before querying gradients")
        g = self._grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(out: "Tensor", parents: tuple["Tensor", ...], rule: Callable) -> "Tensor":
    tape = _active_tape()
    if tape is not None and not tape._consumed:
        tape._ops.append((out, parents, rule))
    return out


# ---------------------------------------------------------------------------
# Tensor


class Tensor:
    """Immutable-by-convention 2-D float64 array participating in autodiff."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are rank <= 2, got rank {arr.ndim}")
        self.data = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor({self.data!r})"

    # operator sugar; all dispatch to the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Elementwise unary ops


def _unary(a: Tensor, out_data: np.ndarray, dfn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    out = Tensor(out_data)
    return _record(out, (a,), lambda g: (dfn(g),))


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _unary(a, -a.data, lambda g: -g)


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    d = a.data
    return _unary(a, d * d, lambda g: g * (2.0 * d))


def absval(a: Tensor) -> Tensor:
    # subgradient at 0 is 0 (sign(0) == 0)
    a = as_tensor(a)
    s = np.sign(a.data)
    return _unary(a, np.abs(a.data), lambda g: g * s)


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    bad = np.argwhere(a.data <= 0.0)
    if bad.size:
        r, c = bad[0]
        raise NumericError(f"log of non-positive entry at ({r}, {c}): {a.data[r, c]}")
    d = a.data
    return _unary(a, np.log(d), lambda g: g / d)


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_d = np.exp(a.data)
    return _unary(a, out_d, lambda g: g * out_d)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_d = np.tanh(a.data)
    return _unary(a, out_d, lambda g: g * (1.0 - out_d * out_d))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    # two-branch form avoids exp overflow for large |a|
    pos = a.data >= 0
    e = np.exp(np.where(pos, -a.data, a.data))
    out_d = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
    return _unary(a, out_d, lambda g: g * out_d * (1.0 - out_d))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    d = a.data
    factor = np.where(d > 0.0, 1.0, slope)
    return _unary(a, d * factor, lambda g: g * factor)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a > floor."""
    a = as_tensor(a)
    mask = (a.data > floor).astype(np.float64)
    return _unary(a, np.maximum(a.data, floor), lambda g: g * mask)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient passes only strictly inside the interval."""
    a = as_tensor(a)
    mask = ((a.data > lo) & (a.data < hi)).astype(np.float64)
    return _unary(a, np.clip(a.data, lo, hi), lambda g: g * mask)


# ---------------------------------------------------------------------------
# Elementwise binary ops (scalar broadcast only)


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.shape != (1, 1) and b.shape != (1, 1):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum().reshape(1, 1)  # the operand was a broadcast scalar


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "add")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "mul")
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)
    return _record(out, (a, b), lambda g: (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "div")
    if np.any(np.abs(b.data) < _DIV_GUARD):
        raise NumericError(f"div: divisor entry below {_DIV_GUARD} in magnitude")
    ad, bd = a.data, b.data
    out = Tensor(ad / bd)
    return _record(
        out,
        (a, b),
        lambda g: (_reduce_to(g / bd, a.shape), _reduce_to(-g * ad / (bd * bd), b.shape)),
    )


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """a (n x m) + b (1 x m) broadcast over rows; gradient for b sums over rows."""
    a, b = as_tensor(a), as_tensor(b)
    if b.shape != (1, a.shape[1]):
        raise ShapeError(f"add_rowvec: expected (1, {a.shape[1]}) row vector, got {b.shape}")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


# ---------------------------------------------------------------------------
# Matmul, reductions, structure ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims disagree, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)
    return _record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def mean(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ShapeError("mean of empty tensor")
    n = a.data.size
    out = Tensor(a.data.mean())
    return _record(out, (a,), lambda g: (np.full(a.shape, g[0, 0] / n),))


def tsum(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ShapeError("sum of empty tensor")
    out = Tensor(a.data.sum())
    return _record(out, (a,), lambda g: (np.full(a.shape, g[0, 0]),))


def concat(a: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    other = 1 - axis
    if a.shape[other] != b.shape[other]:
        raise ShapeError(f"concat: non-concat dims differ, {a.shape} vs {b.shape} on axis {axis}")
    out = Tensor(np.concatenate([a.data, b.data], axis=axis))
    na = a.shape[axis]

    def rule(g):
        if axis == 0:
            return g[:na], g[na:]
        return g[:, :na], g[:, na:]

    return _record(out, (a, b), rule)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows by index; backward scatter-adds into the source rows."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(a.data[idx])

    def rule(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _record(out, (a,), rule)


def take_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice; backward pads the complement with zeros."""
    a = as_tensor(a)
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"take_cols: bad range [{start}, {stop}) for shape {a.shape}")
    out = Tensor(a.data[:, start:stop])

    def rule(g):
        buf = np.zeros_like(a.data)
        buf[:, start:stop] = g
        return (buf,)

    return _record(out, (a,), rule)


def median_of(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise median across K same-shape tensors.

    Odd K routes the gradient to the median sample of each entry; even K splits
    it half/half between the two middle order statistics.
    """
    ts = [as_tensor(t) for t in tensors]
    k = len(ts)
    if k < 2:
        raise ShapeError("median_of needs at least 2 tensors")
    shape = ts[0].shape
    for t in ts:
        if t.shape != shape:
            raise ShapeError(f"median_of: mixed shapes {shape} vs {t.shape}")
    stacked = np.stack([t.data for t in ts], axis=0)
    order = np.argsort(stacked, axis=0, kind="stable")
    weights = np.zeros_like(stacked)
    if k % 2 == 1:
        mid = order[k // 2 : k // 2 + 1]
        np.put_along_axis(weights, mid, 1.0, axis=0)
        out_data = np.take_along_axis(stacked, mid, axis=0)[0]
    else:
        mids = order[k // 2 - 1 : k // 2 + 1]
        np.put_along_axis(weights, mids, 0.5, axis=0)
        out_data = np.take_along_axis(stacked, mids, axis=0).mean(axis=0)
    out = Tensor(out_data)
    return _record(out, tuple(ts), lambda g: tuple(g * weights[i] for i in range(k)))


def gradient_stop(a: Tensor) -> Tensor:
    """Same values, fresh leaf: downstream gradients never reach ``a``."""
    return Tensor(as_tensor(a).data.copy())


# ---------------------------------------------------------------------------
# Finite-difference verification oracle


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values each
    call and be deterministic. Relative error per coordinate is
    |g_tape - g_fd| / max(1e-8, |g_tape| + |g_fd|).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
        tape_grads = [tape.grad(p).copy() for p in params]

    worst = 0.0
    for p, gt in zip(params, tape_grads):
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            dn = loss_fn().item()
            flat[i] = orig
            gfd = (up - dn) / (2.0 * h)
            gti = gt.ravel()[i]
            rel = abs(gti - gfd) / max(1e-8, abs(gti) + abs(gfd))
            worst = max(worst, rel)
    return worst
