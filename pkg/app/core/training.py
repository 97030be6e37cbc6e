"""
Training objectives and the optimization loop.
Covers the diffusion loss on target graphs, the auxiliary masked-text loss,
masked-LM pretraining, gradient accumulation on an epoch schedule, periodic
evaluation and exact checkpoint/resume.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from tqdm import tqdm

from app.core.checkpoint import Checkpoint, TrainState, save_checkpoint
from app.core.denoiser import Denoiser, DenoiserOutput
from app.core.diffusion import NoiseSchedule, forward_sample, mask_text
from app.core.vocab import TokenSequence, Vocabulary
from app.errors import EmptyCorpus, EmptyDataset, NonFiniteLoss, ShapeMismatch
from app.models import NUM_BOND_KINDS, SegmentTag, TraceEvent, TraceKind
from app.numerics import AdamW, Tape, Tensor, backward, cross_entropy, index, scale, total

logger = logging.getLogger(__name__)

Objective = Callable[[Denoiser, TokenSequence, np.random.Generator], Tuple[Tensor, "LossBreakdown"]]
EvalCallback = Callable[[Denoiser, int], Dict[str, Any]]


class TrainConfig(BaseModel):
    """Optimization hyperparameters."""
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = 5e-5
    batch_size: int = 16
    accumulation_epochs: List[int] = [0, 90, 150, 180]
    accumulation_steps: List[int] = [1, 4, 16, 64]
    T: int = 1000
    text_mask_probability: float = 0.15
    mlm_probability: float = 0.15
    seed: int = 42
    max_epochs: int = 200
    max_steps: Optional[int] = None
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    checkpoint_every: int = 0
    eval_every: int = 0
    progress: bool = True

    @field_validator("text_mask_probability", "mlm_probability")
    @classmethod
    def _probability(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probability must lie in [0, 1], got {value}")
        return value

    @field_validator("batch_size", "T", "max_epochs")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        epochs, steps = self.accumulation_epochs, self.accumulation_steps
        if len(epochs) != len(steps) or not epochs:
            raise ValueError("accumulation_epochs and accumulation_steps must be non-empty and equally long")
        if epochs[0] != 0 or any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("accumulation_epochs must start at 0 and increase strictly")
        if steps[0] < 1 or any(b < a for a, b in zip(steps, steps[1:])):
            raise ValueError("accumulation_steps must be positive and non-decreasing")
        return self


def accumulation_steps_for(epoch: int, config: TrainConfig) -> int:
    """Micro-batches per optimizer step at the given epoch."""
    current = config.accumulation_steps[0]
    for threshold, steps in zip(config.accumulation_epochs, config.accumulation_steps):
        if epoch >= threshold:
            current = steps
    return current


@dataclass
class LossBreakdown:
    node: float = 0.0
    edge: float = 0.0
    text: float = 0.0

    @property
    def total(self) -> float:
        return self.node + self.edge + self.text

    def to_dict(self) -> Dict[str, float]:
        return {"loss": self.total, "node_loss": self.node, "edge_loss": self.edge, "text_loss": self.text}

    @classmethod
    def mean(cls, items: Sequence["LossBreakdown"]) -> "LossBreakdown":
        n = max(len(items), 1)
        return cls(
            node=sum(b.node for b in items) / n,
            edge=sum(b.edge for b in items) / n,
            text=sum(b.text for b in items) / n,
        )


def _check_output(out: DenoiserOutput, clean: TokenSequence) -> None:
    m = clean.num_target
    if out.token_logits.shape[0] != clean.length or out.edge_logits.shape[:2] != (m, m):
        raise ShapeMismatch(
            f"Output {out.token_logits.shape}/{out.edge_logits.shape} does not match "
            f"sequence of length {clean.length} with {m} target slots"
        )


def node_loss(out: DenoiserOutput, clean: TokenSequence, vocab: Vocabulary, rows: Optional[np.ndarray] = None) -> Tensor:
    """Cross-entropy of target slots over node categories; rows selects a subset of slots."""
    slots = np.arange(clean.num_target) if rows is None else np.asarray(rows, dtype=np.int64)
    positions = clean.target_slice.start + slots
    columns = np.array(vocab.node_category_ids)
    logits = index(out.token_logits, (positions[:, None], columns[None, :]))
    targets = [vocab.node_column(int(tok)) for tok in clean.token_ids[positions]]
    return cross_entropy(logits, targets)


def edge_loss(out: DenoiserOutput, clean: TokenSequence, pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Tensor:
    """Cross-entropy over content edge categories, once per unordered pair."""
    rows, cols = np.triu_indices(clean.num_target, k=1) if pairs is None else pairs
    logits = index(out.edge_logits, (rows, cols, slice(0, NUM_BOND_KINDS)))
    return cross_entropy(logits, clean.tgt_edges[rows, cols])


def text_loss(out: DenoiserOutput, clean: TokenSequence, text_mask: np.ndarray) -> Tensor:
    """Cross-entropy over the full token vocabulary at masked text positions."""
    positions = np.flatnonzero(text_mask)
    logits = index(out.token_logits, positions)
    return cross_entropy(logits, clean.token_ids[positions])


def diffusion_loss(out: DenoiserOutput, clean: TokenSequence, vocab: Vocabulary) -> Tensor:
    """Node cross-entropy over all target slots plus edge cross-entropy over i < j."""
    _check_output(out, clean)
    return total(node_loss(out, clean, vocab), edge_loss(out, clean))


def total_loss(
    out: DenoiserOutput,
    clean: TokenSequence,
    text_mask: np.ndarray,
    vocab: Vocabulary,
) -> Tuple[Tensor, LossBreakdown]:
    """
    Diffusion loss plus the masked-text loss.

    Args:
        out: Denoiser output on the corrupted sequence
        clean: Uncorrupted sequence holding the targets
        text_mask: Boolean array of text positions that were masked
        vocab: Vocabulary

    Returns:
        (scalar loss tensor, per-component values)
    """
    _check_output(out, clean)
    nodes = node_loss(out, clean, vocab)
    edges = edge_loss(out, clean)
    text = text_loss(out, clean, text_mask)
    breakdown = LossBreakdown(node=nodes.item(), edge=edges.item(), text=text.item())
    return total(nodes, edges, text), breakdown


def diffusion_objective(vocab: Vocabulary, schedule: NoiseSchedule, text_mask_probability: float) -> Objective:
    """Sample t ~ U{1..T}, corrupt the target graph, mask text, score the prediction."""

    def objective(model: Denoiser, clean: TokenSequence, rng: np.random.Generator) -> Tuple[Tensor, LossBreakdown]:
        t = int(rng.integers(1, schedule.T + 1))
        noisy = forward_sample(clean, t, schedule, rng, vocab)
        noisy, text_mask = mask_text(noisy, text_mask_probability, rng, vocab)
        return total_loss(model.forward(noisy), clean, text_mask, vocab)

    return objective


def mlm_mask(
    seq: TokenSequence,
    probability: float,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> Tuple[TokenSequence, np.ndarray, np.ndarray]:
    """
    Mask text tokens, target nodes and target edges independently.

    Returns:
        (masked copy, boolean token mask over positions, boolean upper-triangle edge mask)
    """
    masked = seq.copy()
    eligible = (seq.token_ids != vocab.sep_id) & (seq.segment_tags != SegmentTag.SOURCE_GRAPH)
    token_mask = (rng.random(seq.length) < probability) & eligible
    masked.token_ids[token_mask] = vocab.mask_id

    m = seq.num_target
    rows, cols = np.triu_indices(m, k=1)
    hits = rng.random(rows.size) < probability
    edge_mask = np.zeros((m, m), dtype=bool)
    edge_mask[rows[hits], cols[hits]] = True
    masked.tgt_edges[rows[hits], cols[hits]] = vocab.edge_mask_index
    masked.tgt_edges[cols[hits], rows[hits]] = vocab.edge_mask_index
    return masked, token_mask, edge_mask


def mlm_objective(vocab: Vocabulary, probability: float) -> Objective:
    """One-step absorbing corruption: loss only on masked tokens and edges."""

    def objective(model: Denoiser, clean: TokenSequence, rng: np.random.Generator) -> Tuple[Tensor, LossBreakdown]:
        masked, token_mask, edge_mask = mlm_mask(clean, probability, rng, vocab)
        out = model.forward(masked)
        target = np.zeros(clean.length, dtype=bool)
        target[clean.target_slice] = True
        nodes = node_loss(out, clean, vocab, rows=np.flatnonzero(token_mask[target]))
        edges = edge_loss(out, clean, pairs=np.nonzero(edge_mask))
        text = text_loss(out, clean, token_mask & ~target)
        breakdown = LossBreakdown(node=nodes.item(), edge=edges.item(), text=text.item())
        return total(nodes, edges, text), breakdown

    return objective


@dataclass
class TrainResult:
    model: Denoiser
    optimizer: AdamW
    state: TrainState
    trace: List[TraceEvent] = field(default_factory=list)


def write_trace(path: Union[str, Path], trace: Sequence[Dict[str, Any]]) -> None:
    """Rewrite the JSONL metrics trace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for event in trace:
            f.write(json.dumps(event, sort_keys=True) + "\n")


def train_loop(
    model: Denoiser,
    dataset: Sequence[TokenSequence],
    config: TrainConfig,
    vocab: Vocabulary,
    rng: np.random.Generator,
    objective: Optional[Objective] = None,
    resume: Optional[Checkpoint] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    trace_path: Optional[Union[str, Path]] = None,
    on_eval: Optional[EvalCallback] = None,
) -> TrainResult:
    """
    Optimize the denoiser over shuffled epochs with scheduled gradient accumulation.

    Each micro-batch contributes the mean loss of its instances; an optimizer step
    averages the gradients of its micro-batches. Steps never straddle an epoch
    boundary, so every checkpoint sits at a step boundary and a resumed run
    replays the uninterrupted trace exactly.

    Args:
        model: Denoiser to train in place
        dataset: Clean training sequences
        config: Optimization settings
        vocab: Vocabulary (its digest goes into checkpoints)
        rng: Generator driving shuffling and corruption
        objective: Per-instance loss; defaults to the diffusion objective
        resume: Checkpoint to continue from
        checkpoint_path: Where to write periodic and final checkpoints
        trace_path: Where to write the JSONL metrics trace
        on_eval: Called every eval_every steps; its dict becomes an eval trace event

    Returns:
        TrainResult with the trained model, optimizer and trace

    Raises:
        EmptyDataset: If dataset is empty
        NonFiniteLoss: If any instance loss is NaN or infinite
    """
    if not dataset:
        raise EmptyDataset("Training dataset is empty")
    if objective is None:
        objective = diffusion_objective(vocab, NoiseSchedule(config.T), config.text_mask_probability)

    optimizer = AdamW(model.parameters(), config.learning_rate, config.betas, config.eps, config.weight_decay)
    state = TrainState()
    if resume is not None:
        model.load_arrays(resume.arrays)
        optimizer = AdamW(model.parameters(), config.learning_rate, config.betas, config.eps, config.weight_decay)
        optimizer.state = resume.optimizer
        state = resume.train_state
        rng.bit_generator.state = state.rng_state
        logger.info(f"Resuming at step {state.step}, epoch {state.epoch}, batch {state.cursor}")

    def snapshot() -> None:
        state.rng_state = rng.bit_generator.state
        if checkpoint_path is not None:
            state.trace.append(TraceEvent(TraceKind.CHECKPOINT, state.step, {"path": str(checkpoint_path)}).to_dict())
            save_checkpoint(checkpoint_path, model, optimizer, vocab.digest, state)
        if trace_path is not None:
            write_trace(trace_path, state.trace)

    n = len(dataset)
    finished = config.max_steps is not None and state.step >= config.max_steps
    while state.epoch < config.max_epochs and not finished:
        if state.order is None:
            state.order = rng.permutation(n).tolist()
            state.cursor = 0
        accumulation = accumulation_steps_for(state.epoch, config)
        batches = [state.order[i:i + config.batch_size] for i in range(0, n, config.batch_size)]
        if state.cursor == 0:
            logger.info(f"Epoch {state.epoch}: {len(batches)} micro-batches, accumulation {accumulation}")

        progress = tqdm(
            total=len(batches),
            initial=state.cursor,
            desc=f"epoch {state.epoch}",
            disable=not config.progress,
            leave=False,
        )
        while state.cursor < len(batches):
            group = batches[state.cursor:state.cursor + accumulation]
            optimizer.zero_grad()
            parts: List[LossBreakdown] = []
            for batch in group:
                for position in batch:
                    with Tape():
                        loss, breakdown = objective(model, dataset[position], rng)
                        if not math.isfinite(loss.item()):
                            logger.error(f"Non-finite loss at step {state.step}: {breakdown.to_dict()}")
                            raise NonFiniteLoss(state.step, breakdown.to_dict())
                        backward(scale(loss, 1.0 / len(batch)))
                    parts.append(breakdown)
            optimizer.step(grad_scale=1.0 / len(group))
            state.cursor += len(group)
            state.step += 1
            progress.update(len(group))

            event = TraceEvent(TraceKind.LOSS, state.step, LossBreakdown.mean(parts).to_dict())
            state.trace.append(event.to_dict())
            progress.set_postfix(loss=f"{event.data['loss']:.4f}")

            if on_eval is not None and config.eval_every and state.step % config.eval_every == 0:
                metrics = on_eval(model, state.step)
                state.trace.append(TraceEvent(TraceKind.EVAL, state.step, metrics).to_dict())
                logger.info(f"Step {state.step} evaluation: {metrics}")
            finished = config.max_steps is not None and state.step >= config.max_steps
            if state.cursor >= len(batches):
                state.epoch += 1
                state.order = None
                state.cursor = 0
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                snapshot()
            if finished or state.order is None:
                break
        progress.close()

    snapshot()
    logger.info(f"Training finished at step {state.step}, epoch {state.epoch}")
    trace = [TraceEvent.from_dict(e) for e in state.trace]
    return TrainResult(model=model, optimizer=optimizer, state=state, trace=trace)


def pretrain_mlm(
    model: Denoiser,
    corpus: Sequence[TokenSequence],
    config: TrainConfig,
    vocab: Vocabulary,
    rng: np.random.Generator,
    **kwargs,
) -> TrainResult:
    """
    Masked-LM pretraining over a mix of paired, text-only and graph-only entries.

    Raises:
        EmptyCorpus: If corpus is empty
    """
    if not corpus:
        raise EmptyCorpus("Pretraining corpus is empty")
    return train_loop(model, corpus, config, vocab, rng, objective=mlm_objective(vocab, config.mlm_probability), **kwargs)
