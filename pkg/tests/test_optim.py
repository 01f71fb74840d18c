import math

import numpy as np
import pytest

from gateformer.optim import AdamState, adam_step
from gateformer.tensor import ShapeError, Tensor


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    before = p.data.copy()
    state = AdamState(lr=0.1)
    adam_step([p], [np.zeros(3)], state)
    np.testing.assert_array_equal(p.data, before)
    assert state.t == 1


def test_first_step_moves_by_lr_times_sign():
    g = np.array([0.3, -5.0, 1e-3, -2e-2])
    p = Tensor(np.zeros(4), requires_grad=True)
    adam_step([p], [g], AdamState(lr=0.01))
    np.testing.assert_allclose(p.data, -0.01 * np.sign(g), rtol=1e-4)


def _scalar_adam(x, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Independent scalar simulation of Adam on f(x) = x^2."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return x


def test_quadratic_converges_and_matches_scalar_simulation():
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState(lr=0.1)
    for _ in range(200):
        adam_step([p], [2 * p.data], state)
    oracle = _scalar_adam(1.0, 0.1, 200)
    assert abs(oracle) < 0.05
    assert abs(p.data[0] - oracle) < 1e-12
    assert state.t == 200


def test_shape_mismatch():
    p = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(4)], AdamState())
    with pytest.raises(ShapeError):
        adam_step([p], [], AdamState())
