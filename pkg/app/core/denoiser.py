"""
Unified text-graph transformer.
Text, source-graph and target-graph tokens share one sequence; edges enter as a
per-head additive attention bias between tokens of the same graph segment and
are read back out of the last layer's bias by a dedicated edge head.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.core.vocab import TokenSequence
from app.errors import ShapeMismatch
from app.models import EDGE_VOCAB_SIZE
from app.numerics import (
    Tensor,
    add,
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
)

logger = logging.getLogger(__name__)


class DenoiserConfig(BaseModel):
    """Architecture hyperparameters."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    layers: int = 4
    hidden: int = 128
    heads: int = 4
    max_positions: int = 512
    token_vocab_size: int
    edge_vocab_size: int = EDGE_VOCAB_SIZE
    max_target_length: int = 128
    position_embedding: bool = True
    bias_recursion: bool = True
    init_std: float = 0.02

    @model_validator(mode="after")
    def _check_dimensions(self) -> "DenoiserConfig":
        if self.layers < 1 or self.hidden < 1 or self.heads < 1:
            raise ValueError("layers, hidden and heads must be positive")
        if self.hidden % self.heads:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.max_positions < self.max_target_length:
            raise ValueError("max_positions must cover at least max_target_length")
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass
class DenoiserOutput:
    """
    Attributes:
        token_logits: (N, token vocab) logits for every position
        edge_logits: (m, m, edge vocab) target edge logits, symmetric in (i, j)
    """
    token_logits: Tensor
    edge_logits: Tensor


def _parameter_shapes(config: DenoiserConfig) -> Dict[str, Tuple[int, ...]]:
    d, ff = config.hidden, 4 * config.hidden
    shapes: Dict[str, Tuple[int, ...]] = {
        "token_embedding": (config.token_vocab_size, d),
        "position_embedding": (config.max_positions, d),
        "embedding_norm.gain": (d,),
        "embedding_norm.bias": (d,),
        "edge_embedding": (config.edge_vocab_size, config.heads),
    }
    for layer in range(config.layers):
        prefix = f"layers.{layer}"
        for name in ("query", "key", "value", "output"):
            shapes[f"{prefix}.{name}.weight"] = (d, d)
            shapes[f"{prefix}.{name}.bias"] = (d,)
        shapes[f"{prefix}.attention_norm.gain"] = (d,)
        shapes[f"{prefix}.attention_norm.bias"] = (d,)
        shapes[f"{prefix}.ff_in.weight"] = (d, ff)
        shapes[f"{prefix}.ff_in.bias"] = (ff,)
        shapes[f"{prefix}.ff_out.weight"] = (ff, d)
        shapes[f"{prefix}.ff_out.bias"] = (d,)
        shapes[f"{prefix}.ff_norm.gain"] = (d,)
        shapes[f"{prefix}.ff_norm.bias"] = (d,)
    shapes["token_head.weight"] = (d, config.token_vocab_size)
    shapes["token_head.bias"] = (config.token_vocab_size,)
    shapes["edge_head.weight"] = (config.heads, config.edge_vocab_size)
    shapes["edge_head.bias"] = (config.edge_vocab_size,)
    return shapes


def init_parameters(config: DenoiserConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Weights ~ N(0, init_std); layer-norm gains 1; biases 0."""
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in _parameter_shapes(config).items():
        if name.endswith(".gain"):
            arrays[name] = np.ones(shape)
        elif name.endswith(".bias"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, config.init_std, size=shape)
    return arrays


def permute_positions(seq: TokenSequence, rng: np.random.Generator) -> TokenSequence:
    """Shuffle the position ids of target slots; text and source keep theirs."""
    permuted = seq.copy()
    target = seq.target_slice
    permuted.position_ids[target] = seq.position_ids[target][rng.permutation(seq.num_target)]
    return permuted


class Denoiser:
    """
    Transformer mapping a noisy sequence to clean-token and clean-edge logits.

    Parameters live in a flat name -> Tensor dictionary so that the optimizer
    and checkpoint code can address them uniformly.
    """

    def __init__(
        self,
        config: DenoiserConfig,
        rng: Optional[np.random.Generator] = None,
        arrays: Optional[Mapping[str, np.ndarray]] = None,
    ):
        self.config = config
        if arrays is None:
            arrays = init_parameters(config, rng if rng is not None else np.random.default_rng(0))
        self.params: Dict[str, Tensor] = {}
        self.load_arrays(arrays)
        logger.info(
            f"Denoiser: {config.layers} layers, hidden {config.hidden}, {config.heads} heads, "
            f"{sum(p.size for p in self.params.values())} parameters"
        )

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        expected = _parameter_shapes(self.config)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ShapeMismatch(f"Parameter names differ: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != shape:
                raise ShapeMismatch(f"Parameter '{name}' has shape {values.shape}, expected {shape}")
            self.params[name] = Tensor(values.copy(), requires_grad=True, name=name)

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return add(matmul(x, self._p(f"{name}.weight")), self._p(f"{name}.bias"))

    def embed(self, seq: TokenSequence) -> Tuple[Tensor, Tensor, np.ndarray]:
        """
        Initial hidden states and edge bias.

        Returns:
            (h0 of shape (N, d), b0 of shape (H, N, N), pair mask of shape (N, N))
        """
        cfg = self.config
        if seq.length > cfg.max_positions:
            raise ShapeMismatch(f"Sequence of length {seq.length} exceeds max_positions {cfg.max_positions}")
        h = embedding_lookup(self._p("token_embedding"), seq.token_ids)
        if cfg.position_embedding:
            h = add(h, embedding_lookup(self._p("position_embedding"), seq.position_ids))
        h = layer_norm(h, self._p("embedding_norm.gain"), self._p("embedding_norm.bias"))

        categories, pair_mask = seq.edge_category_matrix()
        bias = embedding_lookup(self._p("edge_embedding"), categories)
        bias = mul(bias, pair_mask[:, :, None])
        return h, permute(bias, (2, 0, 1)), pair_mask

    def attention_layer(
        self,
        layer: int,
        h: Tensor,
        bias: Tensor,
        pair_mask: np.ndarray,
        attention_out: Optional[List[np.ndarray]] = None,
    ) -> Tuple[Tensor, Tensor]:
        """
        One post-norm block with edge-biased multi-head attention.

        Args:
            layer: Layer index
            h: (N, d) hidden states
            bias: (H, N, N) additive attention bias
            pair_mask: (N, N) same-graph-segment indicator
            attention_out: If given, receives this layer's attention weights

        Returns:
            (next hidden states, next bias); the next bias is this layer's
            attention restricted to graph pairs, or the input bias when
            recursion is disabled
        """
        cfg = self.config
        n = h.shape[0]
        if h.shape != (n, cfg.hidden) or bias.shape != (cfg.heads, n, n):
            raise ShapeMismatch(f"attention_layer: hidden {h.shape} / bias {bias.shape} inconsistent")
        prefix = f"layers.{layer}"

        def split_heads(x: Tensor) -> Tensor:
            return permute(reshape(x, (n, cfg.heads, cfg.head_dim)), (1, 0, 2))

        q = split_heads(self._linear(h, f"{prefix}.query"))
        k = split_heads(self._linear(h, f"{prefix}.key"))
        v = split_heads(self._linear(h, f"{prefix}.value"))

        scores = scale(matmul(q, permute(k, (0, 2, 1))), 1.0 / math.sqrt(cfg.head_dim))
        attention = softmax_rows(add(scores, bias))
        if attention_out is not None:
            attention_out.append(attention.values.copy())

        context = reshape(permute(matmul(attention, v), (1, 0, 2)), (n, cfg.hidden))
        h = layer_norm(
            add(h, self._linear(context, f"{prefix}.output")),
            self._p(f"{prefix}.attention_norm.gain"),
            self._p(f"{prefix}.attention_norm.bias"),
        )
        ff = self._linear(gelu(self._linear(h, f"{prefix}.ff_in")), f"{prefix}.ff_out")
        h = layer_norm(add(h, ff), self._p(f"{prefix}.ff_norm.gain"), self._p(f"{prefix}.ff_norm.bias"))

        next_bias = mul(attention, pair_mask[None, :, :]) if cfg.bias_recursion else bias
        return h, next_bias

    def forward(self, seq: TokenSequence, attention_out: Optional[List[np.ndarray]] = None) -> DenoiserOutput:
        """
        Predict clean tokens for every position and clean edges for the target graph.

        Args:
            seq: Noisy sequence
            attention_out: Optional list collecting every layer's attention weights

        Returns:
            DenoiserOutput with symmetric edge logits
        """
        m = seq.num_target
        if seq.tgt_edges.shape != (m, m) or seq.segment_tags.shape != seq.token_ids.shape:
            raise ShapeMismatch(f"Malformed sequence: {seq.token_ids.shape} tokens, {seq.tgt_edges.shape} edges")
        h, bias, pair_mask = self.embed(seq)
        for layer in range(self.config.layers):
            h, bias = self.attention_layer(layer, h, bias, pair_mask, attention_out)

        token_logits = self._linear(h, "token_head")

        target = seq.target_slice
        block = index(bias, (slice(None), target, target))
        pairs = reshape(permute(block, (1, 2, 0)), (m * m, self.config.heads))
        raw = reshape(self._linear(pairs, "edge_head"), (m, m, self.config.edge_vocab_size))
        edge_logits = scale(add(raw, permute(raw, (1, 0, 2))), 0.5)
        return DenoiserOutput(token_logits=token_logits, edge_logits=edge_logits)
