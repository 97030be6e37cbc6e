import numpy as np
import pytest

from app.errors import ShapeMismatch
from app.numerics import AdamW, AdamWState, Tensor, adamw_step, adamw_step_elementwise


def random_problem(seed: int):
    rng = np.random.default_rng(seed)
    params = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=(4,))}
    grads = {name: rng.normal(size=p.shape) for name, p in params.items()}
    return params, grads


def test_vectorized_and_elementwise_agree_bitwise() -> None:
    params, grads = random_problem(0)
    state_a = AdamWState.zeros_like(params)
    state_b = AdamWState.zeros_like(params)
    a, b = params, params
    for step in range(5):
        _, g = random_problem(step + 1)
        a, state_a = adamw_step(a, g, state_a, lr=1e-3)
        b, state_b = adamw_step_elementwise(b, g, state_b, lr=1e-3)
    for name in params:
        assert np.array_equal(a[name], b[name])
        assert np.array_equal(state_a.exp_avg_sq[name], state_b.exp_avg_sq[name])
    assert state_a.step == state_b.step == 5


def test_first_step_moves_by_learning_rate() -> None:
    params = {"w": np.array([1.0, -1.0])}
    grads = {"w": np.array([0.5, -2.0])}
    new, state = adamw_step(params, grads, AdamWState.zeros_like(params), lr=0.1, weight_decay=0.0)
    # Bias-corrected first step is lr * sign(g) up to eps.
    np.testing.assert_allclose(new["w"], [0.9, -0.9], atol=1e-6)
    assert state.step == 1


def test_weight_decay_is_decoupled() -> None:
    params = {"w": np.array([2.0])}
    grads = {"w": np.array([0.0])}
    new, _ = adamw_step(params, grads, AdamWState.zeros_like(params), lr=0.1, weight_decay=0.5)
    assert new["w"][0] == pytest.approx(2.0 * (1 - 0.05))


def test_inputs_not_modified() -> None:
    params, grads = random_problem(3)
    before = {n: p.copy() for n, p in params.items()}
    adamw_step(params, grads, AdamWState.zeros_like(params), lr=1e-2)
    for name in params:
        assert np.array_equal(params[name], before[name])


def test_shape_mismatch() -> None:
    params, _ = random_problem(4)
    grads = {"w": np.zeros((4, 3)), "b": np.zeros(4)}
    with pytest.raises(ShapeMismatch):
        adamw_step(params, grads, AdamWState.zeros_like(params), lr=1e-3)


def test_optimizer_applies_grad_scale() -> None:
    w = Tensor(np.array([1.0, 1.0]), requires_grad=True)
    w.grad = np.array([2.0, 4.0])
    optimizer = AdamW({"w": w}, lr=0.01)
    expected, _ = adamw_step({"w": np.array([1.0, 1.0])}, {"w": np.array([1.0, 2.0])},
                             AdamWState.zeros_like({"w": np.zeros(2)}), lr=0.01)
    optimizer.step(grad_scale=0.5)
    assert np.array_equal(w.values, expected["w"])
    optimizer.zero_grad()
    assert w.grad is None
