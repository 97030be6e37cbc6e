"""
Differentiable tensor operations.
Each op computes its forward value with numpy and registers the adjoint that
maps the output gradient back onto its inputs.
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import IndexOutOfRange, ShapeMismatch
from app.numerics.tensor import Tensor, as_tensor, make_result

GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return make_result(
        "add",
        a.values + b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return make_result(
        "mul",
        a.values * b.values,
        (a, b),
        lambda g: (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)),
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return make_result("scale", a.values * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, batched over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def adjoint(g):
        ga = np.matmul(g, np.swapaxes(b.values, -1, -2))
        gb = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result("matmul", np.matmul(a.values, b.values), (a, b), adjoint)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return make_result("reshape", a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def permute(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return make_result(
        "permute",
        np.transpose(a.values, axes),
        (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def index(a, key) -> Tensor:
    """Gather a.values[key]; the adjoint scatters back with accumulation."""
    a = as_tensor(a)

    def adjoint(g):
        full = np.zeros(a.shape, dtype=np.float64)
        np.add.at(full, key, g)
        return (full,)

    return make_result("index", np.array(a.values[key]), (a,), adjoint)


def embedding_lookup(table, ids: np.ndarray) -> Tensor:
    """Rows of table selected by integer ids of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexOutOfRange(
            f"embedding ids must lie in [0, {table.shape[0]}), got [{ids.min()}, {ids.max()}]"
        )

    def adjoint(g):
        full = np.zeros(table.shape, dtype=np.float64)
        np.add.at(full, ids, g)
        return (full,)

    return make_result("embedding", table.values[ids], (table,), adjoint)


def softmax_rows(a) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    a = as_tensor(a)
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=-1, keepdims=True)

    def adjoint(g):
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", probs, (a,), adjoint)


def log_softmax_values(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    if gain.shape != a.shape[-1:] or bias.shape != a.shape[-1:]:
        raise ShapeMismatch(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs input {a.shape}")
    mean = a.values.mean(axis=-1, keepdims=True)
    centered = a.values - mean
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std

    def adjoint(g):
        g_normed = g * gain.values
        ga = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        return ga, _unbroadcast(g * normed, gain.shape), _unbroadcast(g, bias.shape)

    return make_result("layer_norm", normed * gain.values + bias.values, (a, gain, bias), adjoint)


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.values
    inner = GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)

    def adjoint(g):
        d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * d_inner),)

    return make_result("gelu", 0.5 * x * (1.0 + t), (a,), adjoint)


def cross_entropy(
    logits,
    targets: Union[int, Sequence[int], np.ndarray],
    weights: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Summed cross-entropy -log softmax(logits)[target] over rows.

    Args:
        logits: (N, K) tensor, or (K,) for a single row
        targets: N target ids (or one id)
        weights: Optional per-row weights (0 drops a row)

    Returns:
        Scalar tensor
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    values = logits.values[None, :] if single else logits.values
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if values.ndim != 2 or targets.shape != (values.shape[0],):
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    num_classes = values.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= num_classes):
        raise IndexOutOfRange(f"cross_entropy targets must lie in [0, {num_classes})")
    row_weights = np.ones(targets.shape[0]) if weights is None else np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if row_weights.shape != targets.shape:
        raise ShapeMismatch(f"cross_entropy: weights {row_weights.shape} vs targets {targets.shape}")

    rows = np.arange(targets.shape[0])
    log_probs = log_softmax_values(values) if values.size else values
    loss = -(log_probs[rows, targets] * row_weights).sum() if targets.size else 0.0

    def adjoint(g):
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        grad *= row_weights[:, None] * g
        return (grad.reshape(logits.shape),)

    return make_result("cross_entropy", np.asarray(loss, dtype=np.float64), (logits,), adjoint)


def total(*terms) -> Tensor:
    """Sum of scalar tensors."""
    result = as_tensor(terms[0])
    for term in terms[1:]:
        result = add(result, term)
    return result
