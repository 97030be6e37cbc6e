import numpy as np
import pytest

from app.errors import IndexOutOfRange, NotScalar, ShapeMismatch
from app.numerics import (
    Tape,
    Tensor,
    add,
    backward,
    cross_entropy,
    embedding_lookup,
    gelu,
    index,
    layer_norm,
    matmul,
    mul,
    permute,
    reshape,
    scale,
    softmax_rows,
    total,
)


def numeric_grad(f, x: Tensor, eps: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x.values)
    flat = x.values.reshape(-1)
    for k in range(flat.size):
        saved = flat[k]
        flat[k] = saved + eps
        up = f()
        flat[k] = saved - eps
        down = f()
        flat[k] = saved
        grad.reshape(-1)[k] = (up - down) / (2 * eps)
    return grad


def check_gradients(build, inputs, tol: float = 1e-6) -> None:
    for x in inputs:
        x.zero_grad()
    with Tape():
        loss = build()
    backward(loss)
    for x in inputs:
        expected = numeric_grad(lambda: build().item(), x)
        np.testing.assert_allclose(x.grad, expected, rtol=1e-5, atol=tol)


def param(rng, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_matmul_matches_naive_loop() -> None:
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
    out = matmul(a, b).values
    naive = np.zeros((3, 5))
    for i in range(3):
        for j in range(5):
            for k in range(4):
                naive[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(out, naive, atol=1e-12)


def test_matmul_shape_mismatch() -> None:
    with pytest.raises(ShapeMismatch):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_add_shape_mismatch() -> None:
    with pytest.raises(ShapeMismatch):
        add(np.ones((2, 3)), np.ones((4,)))


def test_no_tape_means_no_recording() -> None:
    x = Tensor(np.ones(3), requires_grad=True)
    y = mul(x, 2.0)
    assert y.is_leaf
    with Tape() as tape:
        z = mul(x, 2.0)
    assert not z.is_leaf
    assert len(tape) == 1


def test_backward_needs_scalar() -> None:
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        y = mul(x, 2.0)
    with pytest.raises(NotScalar):
        backward(y)


def test_broadcast_gradients() -> None:
    rng = np.random.default_rng(1)
    a, b = param(rng, 3, 4), param(rng, 4)
    weights = rng.normal(size=(3, 4))
    check_gradients(lambda: cross_entropy(mul(add(a, b), weights), [0, 1, 2]), [a, b])


def test_batched_matmul_and_permute_gradients() -> None:
    rng = np.random.default_rng(2)
    a, b = param(rng, 2, 3, 4), param(rng, 2, 4, 3)

    def build():
        product = permute(matmul(a, b), (1, 0, 2))
        return cross_entropy(reshape(product, (6, 3)), [0, 1, 2, 0, 1, 2])

    check_gradients(build, [a, b])


def test_softmax_layer_norm_gelu_gradients() -> None:
    rng = np.random.default_rng(3)
    x, gain, bias = param(rng, 4, 6), param(rng, 6), param(rng, 6)

    def build():
        h = gelu(layer_norm(x, gain, bias))
        return cross_entropy(scale(softmax_rows(h), 3.0), [5, 4, 3, 2])

    check_gradients(build, [x, gain, bias])


def test_index_and_embedding_gradients() -> None:
    rng = np.random.default_rng(4)
    table = param(rng, 5, 3)
    ids = np.array([[0, 4], [4, 2]])

    def build():
        looked_up = reshape(embedding_lookup(table, ids), (4, 3))
        picked = index(looked_up, (np.array([0, 1, 1, 3])[:, None], np.array([0, 2])[None, :]))
        return total(cross_entropy(picked, [0, 1, 1, 0]), cross_entropy(index(looked_up, 2), 1))

    check_gradients(build, [table])


def test_embedding_out_of_range() -> None:
    with pytest.raises(IndexOutOfRange):
        embedding_lookup(np.ones((3, 2)), np.array([0, 3]))


def test_cross_entropy_values() -> None:
    uniform = np.zeros((4, 5))
    assert cross_entropy(uniform, [0, 1, 2, 3]).item() == pytest.approx(4 * np.log(5))
    assert cross_entropy(np.zeros((0, 5)), []).item() == 0.0
    with pytest.raises(IndexOutOfRange):
        cross_entropy(uniform, [0, 1, 2, 5])
    with pytest.raises(ShapeMismatch):
        cross_entropy(uniform, [0, 1])


def test_cross_entropy_weights() -> None:
    logits = np.random.default_rng(5).normal(size=(3, 4))
    full = cross_entropy(logits, [0, 1, 2]).item()
    dropped = cross_entropy(logits, [0, 1, 2], weights=np.array([1.0, 0.0, 1.0])).item()
    middle = cross_entropy(logits[1:2], [1]).item()
    assert dropped == pytest.approx(full - middle)


def test_softmax_rows_sum_to_one() -> None:
    probs = softmax_rows(np.random.default_rng(6).normal(size=(3, 7, 7)) * 50).values
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)


def test_gradients_accumulate_across_backward_calls() -> None:
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    for _ in range(2):
        with Tape():
            loss = cross_entropy(x, 0)
        backward(loss)
    with Tape():
        single = cross_entropy(x, 0)
    y = Tensor(x.values, requires_grad=True)
    with Tape():
        once = cross_entropy(y, 0)
    backward(once)
    np.testing.assert_allclose(x.grad, 2 * y.grad)
    assert single.item() == pytest.approx(once.item())


def test_cross_entropy_row_weights() -> None:
    uniform = np.zeros((4, 5))
    weighted = cross_entropy(uniform, [0, 1, 2, 3], weights=np.array([1.0, 0.0, 2.0, 0.0]))
    assert weighted.item() == pytest.approx(3 * np.log(5))
    with pytest.raises(ShapeMismatch):
        cross_entropy(uniform, [0, 1, 2, 3], weights=np.ones(3))
    with pytest.raises(ValueError):
        cross_entropy(uniform, [0, 1, 2, 3], weights=np.ones((4, 1)))
