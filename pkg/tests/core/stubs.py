"""
Fixed-logit stand-in for the denoiser, used by sampler tests.
"""

import numpy as np

from app.core.denoiser import DenoiserOutput
from app.core.vocab import TokenSequence, Vocabulary
from app.numerics import Tensor


class FixedLogits:
    """Returns the same node and edge logits for every target slot and pair."""

    def __init__(self, vocab: Vocabulary, node_logits: np.ndarray, edge_logits: np.ndarray):
        self.vocab = vocab
        self.node_logits = np.asarray(node_logits, dtype=np.float64)
        self.edge_logits = np.asarray(edge_logits, dtype=np.float64)
        self.calls = 0

    def forward(self, seq: TokenSequence) -> DenoiserOutput:
        self.calls += 1
        tokens = np.full((seq.length, self.vocab.size), -50.0)
        rows = np.arange(seq.target_slice.start, seq.target_slice.stop)
        tokens[np.ix_(rows, self.vocab.node_category_ids)] = self.node_logits
        m = seq.num_target
        edges = np.broadcast_to(self.edge_logits, (m, m, self.edge_logits.shape[0])).copy()
        return DenoiserOutput(Tensor(tokens), Tensor(edges))


def carbon_chain_logits(vocab: Vocabulary):
    """Strongly prefers carbon atoms joined by single bonds."""
    node = np.full(len(vocab.node_category_ids), -10.0)
    node[vocab.node_column(vocab.node_id("C"))] = 10.0
    edge = np.array([0.0, 3.0, -10.0, -10.0, -10.0, 0.0])
    return node, edge
