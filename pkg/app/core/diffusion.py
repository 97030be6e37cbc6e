"""
Absorbing-state discrete diffusion.
Noise schedule beta(t) = 1/(T-t+1), transition matrices, forward corruption of
target graphs, the x0-parameterized posterior, reverse steps and the sampling
loop with flexible step counts and top-k truncation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from app.chem.molgraph import MolGraph
from app.core.vocab import TokenSequence, Vocabulary, decode_graph
from app.errors import MolDiffusionError, ResidualMask, ShapeMismatch, StepOutOfRange, StrideTooLarge
from app.models import NUM_BOND_KINDS, BondKind, SegmentTag

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 15


@dataclass(frozen=True)
class NoiseSchedule:
    """Absorbing schedule over horizon T; survival(t) = (T - t) / T."""
    T: int = 1000

    def __post_init__(self):
        if self.T < 1:
            raise StepOutOfRange(f"Diffusion horizon must be positive, got {self.T}")

    def check(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise StepOutOfRange(f"Step {t} outside 1..{self.T}")

    def beta_fraction(self, t: int) -> Fraction:
        self.check(t)
        return Fraction(1, self.T - t + 1)

    def beta(self, t: int) -> float:
        return float(self.beta_fraction(t))

    def survival(self, t: int) -> float:
        """Probability that a clean entry is still unmasked after t steps."""
        if not 0 <= t <= self.T:
            raise StepOutOfRange(f"Step {t} outside 0..{self.T}")
        return (self.T - t) / self.T

    def mask_probability(self, t: int) -> float:
        return 1.0 - self.survival(t)


@dataclass(frozen=True)
class TransitionMatrix:
    """K x K row-stochastic matrix with absorbing index z."""
    entries: np.ndarray
    z: int

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def transition_matrix(schedule: NoiseSchedule, t: int, K: int, z: int) -> TransitionMatrix:
    """
    Single-step matrix Q^t.

    Args:
        schedule: Noise schedule
        t: Step in 1..T
        K: Number of categories including [MASK]
        z: Index of [MASK]

    Returns:
        TransitionMatrix with diag 1-beta(t) off z, beta(t) into column z, (z, z) = 1
    """
    if not 0 <= z < K:
        raise StepOutOfRange(f"Mask index {z} outside 0..{K - 1}")
    beta = schedule.beta(t)
    entries = np.eye(K) * (1.0 - beta)
    entries[:, z] = beta
    entries[z, :] = 0.0
    entries[z, z] = 1.0
    return TransitionMatrix(entries, z)


def cumulative_matrix(schedule: NoiseSchedule, t: int, K: int, z: int) -> np.ndarray:
    """Q-bar^t = Q^1 ... Q^t as an explicit product (identity for t = 0)."""
    product = np.eye(K)
    for s in range(1, t + 1):
        product = product @ transition_matrix(schedule, s, K, z).entries
    return product


def forward_sample(
    clean: TokenSequence,
    t: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> TokenSequence:
    """
    Corrupt target nodes and target edges independently with probability t/T.

    Text and source segments are copied untouched, as is the edge diagonal.
    Edges are drawn once per unordered pair and mirrored.
    """
    schedule.check(t)
    p = schedule.mask_probability(t)
    noisy = clean.copy()
    target = clean.target_slice
    m = clean.num_target

    node_hits = rng.random(m) < p
    nodes = noisy.token_ids[target]
    nodes[node_hits] = vocab.mask_id
    noisy.token_ids[target] = nodes

    rows, cols = np.triu_indices(m, k=1)
    edge_hits = rng.random(rows.shape[0]) < p
    edges = noisy.tgt_edges
    edges[rows[edge_hits], cols[edge_hits]] = vocab.edge_mask_index
    edges[cols[edge_hits], rows[edge_hits]] = vocab.edge_mask_index
    return noisy


def mask_text(
    seq: TokenSequence,
    probability: float,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> Tuple[TokenSequence, np.ndarray]:
    """
    Mask instruction words independently; [SEP] is never masked.

    Returns:
        (masked copy, boolean array marking masked positions)
    """
    masked = seq.copy()
    candidates = (seq.segment_tags == SegmentTag.TEXT) & (seq.token_ids != vocab.sep_id)
    hits = (rng.random(seq.length) < probability) & candidates
    masked.token_ids[hits] = vocab.mask_id
    return masked, hits


def posterior(
    x_t: int,
    p_hat: np.ndarray,
    t: int,
    k: int,
    z: int,
) -> np.ndarray:
    """
    Distribution at step t-k given the current category and a clean prediction.

    Args:
        x_t: Current category index
        p_hat: Clean-category distribution, length K with p_hat[z] = 0
        t: Current step
        k: Stride, 1 <= k <= t
        z: Index of [MASK]

    Returns:
        Length-K distribution: point mass at x_t when unmasked, otherwise
        (k/t) p_hat on clean categories and (t-k)/t on [MASK]
    """
    return posterior_batch(np.array([x_t]), np.asarray(p_hat, dtype=np.float64)[None, :], t, k, z)[0]


def posterior_batch(x_t: np.ndarray, p_hat: np.ndarray, t: int, k: int, z: int) -> np.ndarray:
    """Row-wise posterior for (P,) categories and (P, K) predictions."""
    if t < 1:
        raise StepOutOfRange(f"Step {t} must be >= 1")
    if not 1 <= k <= t:
        raise StrideTooLarge(f"Stride {k} must lie in 1..{t}")
    clean = np.array(p_hat, dtype=np.float64)
    clean[:, z] = 0.0
    clean /= clean.sum(axis=1, keepdims=True)

    probs = clean * (k / t)
    probs[:, z] = (t - k) / t
    settled = x_t != z
    if np.any(settled):
        probs[settled] = 0.0
        probs[np.flatnonzero(settled), x_t[settled]] = 1.0
    return probs


def truncate_top_k(probs: np.ndarray, top_k: int) -> np.ndarray:
    """Keep each row's top_k entries (ties to the lower index) and renormalize."""
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if top_k >= probs.shape[1]:
        return probs / probs.sum(axis=1, keepdims=True)
    order = np.argsort(-probs, axis=1, kind="stable")
    kept = np.zeros_like(probs)
    rows = np.arange(probs.shape[0])[:, None]
    kept[rows, order[:, :top_k]] = probs[rows, order[:, :top_k]]
    return kept / kept.sum(axis=1, keepdims=True)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _draw(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    picks = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(picks, probs.shape[1] - 1)


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def node_distribution(token_logits: np.ndarray, seq: TokenSequence, vocab: Vocabulary) -> np.ndarray:
    """p-hat(V): softmax of target-row logits restricted to node categories."""
    rows = _values(token_logits)[seq.target_slice]
    return _softmax(rows[:, vocab.node_category_ids])


def edge_distribution(edge_logits: np.ndarray) -> np.ndarray:
    """p-hat(E) on the upper triangle: softmax over the content categories."""
    values = _values(edge_logits)
    rows, cols = np.triu_indices(values.shape[0], k=1)
    return _softmax(values[rows, cols, :NUM_BOND_KINDS])


def reverse_step(
    state: TokenSequence,
    out,
    t: int,
    k: int,
    top_k: int,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> TokenSequence:
    """
    Move the target graph from step t to step t-k.

    Every masked node and upper-triangle edge is resampled from the posterior of
    its top-k truncated prediction; unmasked entries are copied; sampled edges
    are mirrored so the matrix stays exactly symmetric.
    """
    m = state.num_target
    token_logits = _values(out.token_logits)
    edge_logits = _values(out.edge_logits)
    if token_logits.shape[0] != state.length or edge_logits.shape[:2] != (m, m):
        raise ShapeMismatch(
            f"Denoiser output {token_logits.shape}/{edge_logits.shape} does not match "
            f"sequence of length {state.length} with {m} target slots"
        )

    nxt = state.copy()
    node_ids = vocab.node_category_ids
    a = len(node_ids)
    p_nodes = np.zeros((m, a + 1))
    p_nodes[:, :a] = truncate_top_k(node_distribution(token_logits, state, vocab), top_k)
    current = state.target_nodes
    x_nodes = np.array([a if tok == vocab.mask_id else vocab.node_column(int(tok)) for tok in current])
    drawn = _draw(posterior_batch(x_nodes, p_nodes, t, k, a), rng) if m else np.zeros(0, dtype=np.int64)
    lookup = np.array(node_ids + [vocab.mask_id])
    nxt.token_ids[state.target_slice] = lookup[drawn]

    rows, cols = np.triu_indices(m, k=1)
    if rows.size:
        p_edges = np.zeros((rows.size, NUM_BOND_KINDS + 1))
        p_edges[:, :NUM_BOND_KINDS] = truncate_top_k(edge_distribution(edge_logits), top_k)
        x_edges = state.tgt_edges[rows, cols]
        edges = _draw(posterior_batch(x_edges, p_edges, t, k, vocab.edge_mask_index), rng)
        nxt.tgt_edges[rows, cols] = edges
        nxt.tgt_edges[cols, rows] = edges
    return nxt


def timestep_grid(T: int, steps: int) -> List[int]:
    """Descending grid round(T*i/steps) for i = steps..0, rounding halves up."""
    if not 1 <= steps <= T:
        raise StepOutOfRange(f"Sampling steps {steps} outside 1..{T}")
    return [(2 * T * i + steps) // (2 * steps) for i in range(steps, -1, -1)]


class Denoiser(Protocol):
    def forward(self, seq: TokenSequence): ...


def sample_sequence(
    denoiser: Denoiser,
    seq: TokenSequence,
    steps: int,
    top_k: int,
    rng: np.random.Generator,
    vocab: Vocabulary,
    schedule: NoiseSchedule,
    permute: bool = True,
) -> TokenSequence:
    """Run the reverse chain from an all-masked target to a clean one."""
    from app.core.denoiser import permute_positions

    state = permute_positions(seq, rng) if permute else seq.copy()
    grid = timestep_grid(schedule.T, steps)
    for t, t_next in zip(grid[:-1], grid[1:]):
        out = denoiser.forward(state)
        state = reverse_step(state, out, t, t - t_next, top_k, rng, vocab)
    if np.any(state.target_nodes == vocab.mask_id) or np.any(state.tgt_edges == vocab.edge_mask_index):
        raise ResidualMask("Sampling finished with [MASK] entries left")
    return state


def sample(
    denoiser: Denoiser,
    seq: TokenSequence,
    steps: int,
    top_k: int,
    rng: np.random.Generator,
    vocab: Vocabulary,
    schedule: NoiseSchedule,
    permute: bool = True,
) -> MolGraph:
    """
    Generate one molecule.

    Args:
        denoiser: Model mapping a noisy sequence to clean-graph logits
        seq: Sequence with all target nodes and edges masked
        steps: Number of denoiser calls (1..T)
        top_k: Truncation applied to every predicted distribution
        rng: Random source
        vocab: Vocabulary
        schedule: Noise schedule
        permute: Randomly permute target position ids first

    Returns:
        Decoded MolGraph (decode errors propagate)
    """
    state = sample_sequence(denoiser, seq, steps, top_k, rng, vocab, schedule, permute)
    return decode_graph(vocab, state.target_nodes, state.tgt_edges)


def chain_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Independent per-chain generators derived from one seed."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def sample_many(
    denoiser: Denoiser,
    seqs: Sequence[TokenSequence],
    steps: int,
    top_k: int,
    seed: int,
    vocab: Vocabulary,
    schedule: NoiseSchedule,
    permute: bool = True,
    workers: int = 1,
) -> List[Optional[MolGraph]]:
    """
    Sample independent chains; results do not depend on the worker count.

    Returns:
        One MolGraph per input, or None where decoding failed
    """
    generators = chain_generators(seed, len(seqs))

    def run(job: Tuple[int, TokenSequence, np.random.Generator]) -> Optional[MolGraph]:
        position, seq, rng = job
        try:
            return sample(denoiser, seq, steps, top_k, rng, vocab, schedule, permute)
        except MolDiffusionError as e:
            logger.warning(f"Sample {position} failed to decode: {e}")
            return None

    jobs = list(zip(range(len(seqs)), seqs, generators))
    if workers <= 1:
        return [run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


__all__ = [
    "BondKind",
    "DEFAULT_TOP_K",
    "NoiseSchedule",
    "TransitionMatrix",
    "chain_generators",
    "cumulative_matrix",
    "edge_distribution",
    "forward_sample",
    "mask_text",
    "node_distribution",
    "posterior",
    "posterior_batch",
    "reverse_step",
    "sample",
    "sample_many",
    "sample_sequence",
    "timestep_grid",
    "transition_matrix",
    "truncate_top_k",
]
