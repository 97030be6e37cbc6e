"""
Minimal dense-tensor core: tensors, tape, differentiable ops and AdamW.
"""

from app.numerics.tensor import Tape, Tensor, backward, current_tape
from app.numerics.ops import (
    add,
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
from app.numerics.optim import AdamW, AdamWState, adamw_step, adamw_step_elementwise

__all__ = [
    "AdamW",
    "AdamWState",
    "Tape",
    "Tensor",
    "adamw_step",
    "adamw_step_elementwise",
    "add",
    "backward",
    "cross_entropy",
    "current_tape",
    "embedding_lookup",
    "gelu",
    "index",
    "layer_norm",
    "matmul",
    "mul",
    "permute",
    "reshape",
    "scale",
    "softmax_rows",
    "total",
]
