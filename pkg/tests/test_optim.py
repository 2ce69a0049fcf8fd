import numpy as np
import pytest

from mrlab.optim import AmsGrad, DivergenceError, clip_by_value
from mrlab.tensor import Tensor


def scalar_amsgrad_oracle(theta0, grads, lr, b1, b2, eps, wd=0.0, clip=None):
    """Straight-line transcription of the update rule for a single scalar."""
    theta, m, v, vhat = theta0, 0.0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        if clip is not None:
            g = max(-clip, min(clip, g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        vhat = max(vhat, v)
        theta -= lr * (m / (1 - b1**t)) / (vhat**0.5 + eps)
        theta *= 1 - lr * wd
    return theta


def test_matches_scalar_oracle():
    grads = [0.3, -1.7, 0.05, 2.4, -0.6]
    p = Tensor([1.5])
    opt = AmsGrad([p], lr=1e-2, beta1=0.5, beta2=0.999, weight_decay=1e-2, clip_value=0.5)
    for g in grads:
        opt.step([np.array([[g]])])
    want = scalar_amsgrad_oracle(1.5, grads, 1e-2, 0.5, 0.999, 1e-8, wd=1e-2, clip=0.5)
    assert p.data[0, 0] == pytest.approx(want, abs=1e-12)


def test_first_step_direction_and_magnitude():
    # only m is bias-corrected; first step is lr * g / (sqrt((1-b2) g^2) + eps)
    p = Tensor([0.0])
    opt = AmsGrad([p], lr=1e-3, beta2=0.999)
    opt.step([np.array([[4.0]])])
    want = -1e-3 * 4.0 / (np.sqrt(0.001 * 16.0) + 1e-8)
    assert p.data[0, 0] == pytest.approx(want, rel=1e-12)


def test_vhat_never_decreases():
    p = Tensor([0.0])
    opt = AmsGrad([p], lr=1e-3)
    opt.step([np.array([[10.0]])])
    high = opt.vhat[0][0, 0]
    opt.step([np.array([[1e-4]])])
    assert opt.vhat[0][0, 0] == high


def test_clip_by_value():
    g = np.array([[-3.0, 0.2, 7.0]])
    assert np.array_equal(clip_by_value(g, 0.5), [[-0.5, 0.2, 0.5]])
    with pytest.raises(ValueError):
        clip_by_value(g, 0.0)


def test_nonfinite_gradient_raises():
    p = Tensor([0.0])
    opt = AmsGrad([p])
    with pytest.raises(DivergenceError):
        opt.step([np.array([[np.nan]])])


def test_converges_on_quadratic():
    p = Tensor([5.0])
    opt = AmsGrad([p], lr=0.05)
    for _ in range(4000):
        opt.step([2.0 * p.data])  # d/dp p^2
    assert abs(p.data[0, 0]) < 1e-2


def test_decoupled_decay_applies_after_update():
    p = Tensor([2.0])
    opt = AmsGrad([p], lr=0.1, weight_decay=0.5)
    opt.step([np.array([[0.0]])])
    # zero gradient: pure decay, theta * (1 - lr*wd)
    assert p.data[0, 0] == pytest.approx(2.0 * (1 - 0.1 * 0.5), abs=1e-15)
