"""
AdamW optimizer with decoupled weight decay.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from app.errors import ShapeMismatch
from app.numerics.tensor import Tensor

Arrays = Dict[str, np.ndarray]


@dataclass
class AdamWState:
    """First/second moment estimates and the completed step count."""
    step: int = 0
    exp_avg: Arrays = field(default_factory=dict)
    exp_avg_sq: Arrays = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamWState":
        return cls(
            step=0,
            exp_avg={name: np.zeros_like(p) for name, p in params.items()},
            exp_avg_sq={name: np.zeros_like(p) for name, p in params.items()},
        )


def _check_shapes(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamWState) -> None:
    for name, p in params.items():
        for label, other in (("grad", grads), ("exp_avg", state.exp_avg), ("exp_avg_sq", state.exp_avg_sq)):
            if name not in other or other[name].shape != p.shape:
                raise ShapeMismatch(f"AdamW: {label} for '{name}' does not match parameter shape {p.shape}")


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamWState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> Tuple[Arrays, AdamWState]:
    """
    One decoupled-weight-decay Adam update.

    Args:
        params: Parameter arrays by name
        grads: Gradient arrays by name
        state: Moment estimates from the previous step
        lr: Learning rate
        betas: Moment decay rates
        eps: Denominator floor
        weight_decay: Decoupled decay coefficient

    Returns:
        (new params, new state); inputs are not modified
    """
    _check_shapes(params, grads, state)
    beta1, beta2 = betas
    step = state.step + 1
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    decay = 1.0 - lr * weight_decay

    new_params: Arrays = {}
    new_state = AdamWState(step=step)
    for name, p in params.items():
        g = grads[name]
        m = beta1 * state.exp_avg[name] + (1.0 - beta1) * g
        v = beta2 * state.exp_avg_sq[name] + (1.0 - beta2) * (g * g)
        decayed = p * decay
        new_params[name] = decayed - lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
        new_state.exp_avg[name] = m
        new_state.exp_avg_sq[name] = v
    return new_params, new_state


def adamw_step_elementwise(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamWState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> Tuple[Arrays, AdamWState]:
    """Scalar-loop twin of adamw_step; same operation order, same results."""
    _check_shapes(params, grads, state)
    beta1, beta2 = betas
    step = state.step + 1
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    decay = 1.0 - lr * weight_decay

    new_params: Arrays = {}
    new_state = AdamWState(step=step)
    for name, p in params.items():
        flat_p = p.reshape(-1)
        flat_g = grads[name].reshape(-1)
        flat_m = state.exp_avg[name].reshape(-1)
        flat_v = state.exp_avg_sq[name].reshape(-1)
        out_p = np.empty_like(flat_p)
        out_m = np.empty_like(flat_m)
        out_v = np.empty_like(flat_v)
        for k in range(flat_p.size):
            g = float(flat_g[k])
            m = beta1 * float(flat_m[k]) + (1.0 - beta1) * g
            v = beta2 * float(flat_v[k]) + (1.0 - beta2) * (g * g)
            decayed = float(flat_p[k]) * decay
            out_p[k] = decayed - lr * (m / bias1) / (math.sqrt(v / bias2) + eps)
            out_m[k] = m
            out_v[k] = v
        new_params[name] = out_p.reshape(p.shape)
        new_state.exp_avg[name] = out_m.reshape(p.shape)
        new_state.exp_avg_sq[name] = out_v.reshape(p.shape)
    return new_params, new_state


class AdamW:
    """Applies adamw_step to named Tensor parameters using their accumulated grads."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState.zeros_like({n: p.values for n, p in self.params.items()})

    def step(self, grad_scale: float = 1.0) -> None:
        """Update parameters in place; missing grads count as zero."""
        values = {name: p.values for name, p in self.params.items()}
        grads = {
            name: (p.grad * grad_scale if p.grad is not None else np.zeros_like(p.values))
            for name, p in self.params.items()
        }
        new_values, self.state = adamw_step(
            values, grads, self.state, self.lr, self.betas, self.eps, self.weight_decay
        )
        for name, p in self.params.items():
            p.values = new_values[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
