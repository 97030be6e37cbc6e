"""
Unified text-graph vocabulary and sequence assembly.
Text words, per-element node tokens and special tokens share one id space;
edge categories live in their own small index space.
"""

import hashlib
import json
import re
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.chem.atoms import AtomTable, get_atom_table
from app.chem.molgraph import MolGraph
from app.errors import (
    EmptyCorpus,
    NoAtoms,
    ResidualMask,
    TargetTooLong,
    UnknownToken,
    VocabularyFormatError,
)
from app.models import EDGE_MASK_INDEX, BondKind, SegmentTag

logger = logging.getLogger(__name__)

VOCAB_FORMAT_VERSION = 1

MASK = "[MASK]"
EMPTY = "[EMPTY]"
PAD = "[PAD]"
SEP = "[SEP]"
UNK = "[UNK]"
SPECIAL_TOKENS = (MASK, EMPTY, PAD, SEP)

TOKEN_PATTERN = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def tokenize(text: str) -> List[str]:
    """Lowercased word and punctuation tokens."""
    return TOKEN_PATTERN.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """
    Token and edge-category id tables.

    Attributes:
        text_tokens: word -> id, including [UNK]
        node_tokens: element symbol -> id
        special: [MASK]/[EMPTY]/[PAD]/[SEP] -> id
        edge_categories: bond category name -> edge index, plus [MASK]
    """
    text_tokens: Dict[str, int]
    node_tokens: Dict[str, int]
    special: Dict[str, int]
    edge_categories: Dict[str, int] = field(default_factory=lambda: default_edge_categories())

    def __post_init__(self):
        groups = [set(self.text_tokens.values()), set(self.node_tokens.values()), set(self.special.values())]
        total = sum(len(group) for group in groups)
        if len(set().union(*groups)) != total:
            raise VocabularyFormatError("Text, node and special token ids overlap")
        if sorted(set().union(*groups)) != list(range(total)):
            raise VocabularyFormatError("Token ids must be contiguous from 0")
        if set(self.special) != set(SPECIAL_TOKENS):
            raise VocabularyFormatError(f"Special tokens must be exactly {SPECIAL_TOKENS}")
        if UNK not in self.text_tokens:
            raise VocabularyFormatError("Text vocabulary lacks [UNK]")
        if self.edge_categories.get(MASK) == self.edge_categories.get(BondKind.NONE.value):
            raise VocabularyFormatError("Edge [MASK] must differ from None")
        object.__setattr__(self, "_id_to_token", self._build_reverse())

    def _build_reverse(self) -> Dict[int, str]:
        reverse = {i: w for w, i in self.text_tokens.items()}
        reverse.update({i: s for s, i in self.node_tokens.items()})
        reverse.update({i: s for s, i in self.special.items()})
        return reverse

    @property
    def size(self) -> int:
        return len(self.text_tokens) + len(self.node_tokens) + len(self.special)

    @property
    def num_edge_categories(self) -> int:
        return len(self.edge_categories)

    @property
    def mask_id(self) -> int:
        return self.special[MASK]

    @property
    def empty_id(self) -> int:
        return self.special[EMPTY]

    @property
    def sep_id(self) -> int:
        return self.special[SEP]

    @property
    def unk_id(self) -> int:
        return self.text_tokens[UNK]

    @property
    def edge_mask_index(self) -> int:
        return self.edge_categories[MASK]

    @property
    def node_category_ids(self) -> List[int]:
        """Ids a target slot may hold once clean: every element plus [EMPTY]."""
        return list(self.node_tokens.values()) + [self.empty_id]

    def node_column(self, token_id: int) -> int:
        """Position of a node-category id within node_category_ids."""
        try:
            return self.node_category_ids.index(token_id)
        except ValueError:
            raise UnknownToken(f"Token id {token_id} is not a node category")

    def token(self, token_id: int) -> str:
        try:
            return self._id_to_token[token_id]
        except KeyError:
            raise UnknownToken(f"Unknown token id {token_id}")

    def encode_text(self, text: str) -> List[int]:
        return [self.text_tokens.get(word, self.unk_id) for word in tokenize(text)]

    def node_id(self, symbol: str) -> int:
        try:
            return self.node_tokens[symbol]
        except KeyError:
            raise UnknownToken(f"Element '{symbol}' has no node token")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": VOCAB_FORMAT_VERSION,
            "text_tokens": self.text_tokens,
            "node_tokens": self.node_tokens,
            "special": self.special,
            "edge_categories": self.edge_categories,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Vocabulary":
        if payload.get("version") != VOCAB_FORMAT_VERSION:
            raise VocabularyFormatError(f"Unsupported vocabulary version {payload.get('version')}")
        try:
            return cls(
                text_tokens=dict(payload["text_tokens"]),
                node_tokens=dict(payload["node_tokens"]),
                special=dict(payload["special"]),
                edge_categories=dict(payload["edge_categories"]),
            )
        except KeyError as e:
            raise VocabularyFormatError(f"Vocabulary file lacks {e}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise VocabularyFormatError(f"Vocabulary file {path} is not JSON: {e}")
        return cls.from_dict(payload)


def default_edge_categories() -> Dict[str, int]:
    categories = {kind.value: kind.index for kind in BondKind}
    categories[MASK] = EDGE_MASK_INDEX
    return categories


def build_text_vocab(
    corpus: Iterable[str],
    min_count: int = 1,
    table: Optional[AtomTable] = None,
) -> Vocabulary:
    """
    Build the unified vocabulary from instruction strings.

    Args:
        corpus: Instruction strings
        min_count: Minimum frequency for a word to get its own id
        table: Atom table providing node tokens (defaults to the global table)

    Returns:
        Vocabulary with [UNK] at id 0, words by descending frequency then
        alphabetically, then node tokens, then special tokens

    Raises:
        EmptyCorpus: If the corpus holds no strings
    """
    counts: Counter = Counter()
    seen = 0
    for text in corpus:
        seen += 1
        counts.update(tokenize(text))
    if seen == 0:
        raise EmptyCorpus("Cannot build a vocabulary from an empty corpus")

    words = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    text_tokens = {UNK: 0}
    for word in words:
        text_tokens[word] = len(text_tokens)

    table = table or get_atom_table()
    next_id = len(text_tokens)
    node_tokens = {}
    for symbol in table.symbols:
        node_tokens[symbol] = next_id
        next_id += 1
    special = {}
    for name in SPECIAL_TOKENS:
        special[name] = next_id
        next_id += 1

    logger.info(
        f"Built vocabulary: {len(text_tokens)} text, {len(node_tokens)} node, "
        f"{len(special)} special tokens from {seen} instructions"
    )
    return Vocabulary(text_tokens, node_tokens, special)


@dataclass
class TokenSequence:
    """
    Unified layout: text tokens and [SEP], then source-graph nodes, then
    target-graph slots.

    Attributes:
        token_ids: (n + m_src + m,) token ids
        segment_tags: per-position SegmentTag values
        position_ids: per-position position index
        src_edges: (m_src, m_src) clean edge indices of the source graph
        tgt_edges: (m, m) edge indices of the target graph
    """
    token_ids: np.ndarray
    segment_tags: np.ndarray
    position_ids: np.ndarray
    src_edges: np.ndarray
    tgt_edges: np.ndarray

    @property
    def length(self) -> int:
        return int(self.token_ids.shape[0])

    @property
    def num_text(self) -> int:
        return int(np.count_nonzero(self.segment_tags == SegmentTag.TEXT))

    @property
    def num_source(self) -> int:
        return int(self.src_edges.shape[0])

    @property
    def num_target(self) -> int:
        return int(self.tgt_edges.shape[0])

    @property
    def source_slice(self) -> slice:
        return slice(self.num_text, self.num_text + self.num_source)

    @property
    def target_slice(self) -> slice:
        start = self.num_text + self.num_source
        return slice(start, start + self.num_target)

    @property
    def target_nodes(self) -> np.ndarray:
        return self.token_ids[self.target_slice]

    def copy(self) -> "TokenSequence":
        return TokenSequence(
            self.token_ids.copy(),
            self.segment_tags.copy(),
            self.position_ids.copy(),
            self.src_edges.copy(),
            self.tgt_edges.copy(),
        )

    def edge_category_matrix(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Full-length edge categories and same-graph-segment pair mask.

        Returns:
            (categories, mask): (N, N) int matrix with source/target blocks
            filled and zeros elsewhere, and the (N, N) 0/1 pair mask
        """
        n = self.length
        categories = np.zeros((n, n), dtype=np.int64)
        mask = np.zeros((n, n), dtype=np.float64)
        for block, edges in ((self.source_slice, self.src_edges), (self.target_slice, self.tgt_edges)):
            categories[block, block] = edges
            mask[block, block] = 1.0
        return categories, mask

    def permuted_target(self, order: Sequence[int]) -> "TokenSequence":
        """Jointly permute target node tokens, their position ids and both edge axes."""
        order = np.asarray(order)
        seq = self.copy()
        target = self.target_slice
        seq.token_ids[target] = self.token_ids[target][order]
        seq.position_ids[target] = self.position_ids[target][order]
        seq.tgt_edges = self.tgt_edges[np.ix_(order, order)]
        return seq


def _graph_edges(graph: MolGraph, size: int) -> np.ndarray:
    edges = np.full((size, size), BondKind.NONE.index, dtype=np.int64)
    m = graph.num_atoms
    edges[:m, :m] = graph.bonds
    return edges


def _assemble(
    vocab: Vocabulary,
    text_ids: List[int],
    source: Optional[MolGraph],
    target_ids: List[int],
    tgt_edges: np.ndarray,
) -> TokenSequence:
    text_ids = list(text_ids) + [vocab.sep_id]
    source_ids = [vocab.node_id(a.symbol) for a in source.atoms] if source is not None else []
    token_ids = np.array(text_ids + source_ids + list(target_ids), dtype=np.int64)
    tags = np.array(
        [SegmentTag.TEXT] * len(text_ids)
        + [SegmentTag.SOURCE_GRAPH] * len(source_ids)
        + [SegmentTag.TARGET_GRAPH] * len(target_ids),
        dtype=np.int64,
    )
    src_edges = (
        np.array(source.bonds, dtype=np.int64) if source is not None else np.zeros((0, 0), dtype=np.int64)
    )
    return TokenSequence(
        token_ids=token_ids,
        segment_tags=tags,
        position_ids=np.arange(len(token_ids), dtype=np.int64),
        src_edges=src_edges,
        tgt_edges=tgt_edges,
    )


def encode_instance(
    vocab: Vocabulary,
    instruction: str,
    target_slots: int,
    source: Optional[MolGraph] = None,
    target: Optional[MolGraph] = None,
) -> TokenSequence:
    """
    Lay out one generation or editing instance.

    Args:
        vocab: Vocabulary
        instruction: Instruction text
        target_slots: Number of target slots m
        source: Source molecule for editing tasks (never masked)
        target: Ground truth for training; None builds an all-[MASK] sampling input

    Returns:
        TokenSequence

    Raises:
        TargetTooLong: If the ground-truth molecule exceeds m atoms
    """
    if target_slots < 1:
        raise ValueError(f"target_slots must be >= 1, got {target_slots}")
    if target is None:
        target_ids = [vocab.mask_id] * target_slots
        tgt_edges = np.full((target_slots, target_slots), vocab.edge_mask_index, dtype=np.int64)
        np.fill_diagonal(tgt_edges, BondKind.NONE.index)
    else:
        if target.num_atoms > target_slots:
            raise TargetTooLong(target.num_atoms, target_slots)
        target_ids = [vocab.node_id(a.symbol) for a in target.atoms]
        target_ids += [vocab.empty_id] * (target_slots - target.num_atoms)
        tgt_edges = _graph_edges(target, target_slots)
    return _assemble(vocab, vocab.encode_text(instruction), source, target_ids, tgt_edges)


def encode_text_only(vocab: Vocabulary, text: str) -> TokenSequence:
    """Text-only pretraining entry: no graph segments."""
    return _assemble(vocab, vocab.encode_text(text), None, [], np.zeros((0, 0), dtype=np.int64))


def encode_graph_only(vocab: Vocabulary, graph: MolGraph) -> TokenSequence:
    """Graph-only pretraining entry: the molecule fills the target slots exactly."""
    target_ids = [vocab.node_id(a.symbol) for a in graph.atoms]
    return _assemble(vocab, [], None, target_ids, _graph_edges(graph, graph.num_atoms))


def decode_graph(
    vocab: Vocabulary,
    node_ids: Sequence[int],
    edges: np.ndarray,
    table: Optional[AtomTable] = None,
) -> MolGraph:
    """
    Read a molecule back from target slots.

    Args:
        vocab: Vocabulary
        node_ids: m target token ids
        edges: (m, m) edge category indices

    Returns:
        MolGraph over the non-[EMPTY] slots; edges touching [EMPTY] are dropped

    Raises:
        ResidualMask: If any node or edge is still [MASK]
        NoAtoms: If every slot is [EMPTY]
    """
    node_ids = np.asarray(node_ids, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64)
    if np.any(node_ids == vocab.mask_id) or np.any(edges == vocab.edge_mask_index):
        raise ResidualMask("Target still holds [MASK] entries")
    keep = [i for i, token_id in enumerate(node_ids.tolist()) if token_id != vocab.empty_id]
    if not keep:
        raise NoAtoms("Every target slot decoded to [EMPTY]")

    table = table or get_atom_table()
    atoms = []
    for i in keep:
        symbol = vocab.token(int(node_ids[i]))
        if symbol not in vocab.node_tokens or symbol not in table:
            raise UnknownToken(f"Slot {i} holds non-atom token '{symbol}'")
        atoms.append(table[symbol])

    upper = np.triu(edges[np.ix_(keep, keep)], k=1)
    return MolGraph(tuple(atoms), upper + upper.T)
