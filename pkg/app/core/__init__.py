"""
Core module initialization.
Provides access to the vocabulary, diffusion process, denoiser, training loop
and checkpoints.
"""

from app.core.vocab import (
    TokenSequence,
    Vocabulary,
    build_text_vocab,
    decode_graph,
    encode_graph_only,
    encode_instance,
    encode_text_only,
    tokenize,
)
from app.core.diffusion import (
    NoiseSchedule,
    cumulative_matrix,
    forward_sample,
    mask_text,
    posterior,
    reverse_step,
    sample,
    sample_many,
    timestep_grid,
    transition_matrix,
)
from app.core.denoiser import Denoiser, DenoiserConfig, DenoiserOutput, permute_positions
from app.core.checkpoint import Checkpoint, TrainState, load_checkpoint, save_checkpoint
from app.core.training import (
    LossBreakdown,
    TrainConfig,
    TrainResult,
    accumulation_steps_for,
    diffusion_loss,
    pretrain_mlm,
    total_loss,
    train_loop,
)

__all__ = [
    "Checkpoint",
    "Denoiser",
    "DenoiserConfig",
    "DenoiserOutput",
    "LossBreakdown",
    "NoiseSchedule",
    "TokenSequence",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "Vocabulary",
    "accumulation_steps_for",
    "build_text_vocab",
    "cumulative_matrix",
    "decode_graph",
    "diffusion_loss",
    "encode_graph_only",
    "encode_instance",
    "encode_text_only",
    "forward_sample",
    "load_checkpoint",
    "mask_text",
    "permute_positions",
    "posterior",
    "pretrain_mlm",
    "reverse_step",
    "sample",
    "sample_many",
    "save_checkpoint",
    "timestep_grid",
    "tokenize",
    "total_loss",
    "train_loop",
    "transition_matrix",
]
