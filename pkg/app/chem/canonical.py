"""
Canonical form and exact-match comparison.
Atoms are ranked by iterative neighbourhood refinement; remaining ties are
broken by individualizing each member of the first tied cell and keeping the
lexicographically smallest adjacency encoding. The canonical string is the
SMILES traversal in that ranking.
"""

import logging
from collections import Counter
from typing import List, Optional, Tuple

from app.chem.molgraph import MolGraph
from app.chem.smiles import write_smiles

logger = logging.getLogger(__name__)

MAX_LEAVES = 4096

Encoding = Tuple[Tuple[str, ...], Tuple[Tuple[int, int, int], ...]]


def _dense_ranks(keys: List) -> List[int]:
    index = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return [index[key] for key in keys]


def _initial_labels(g: MolGraph) -> List[int]:
    keys = []
    for i, atom in enumerate(g.atoms):
        categories = tuple(sorted(int(g.bonds[i, j]) for j in g.neighbors(i)))
        keys.append((atom.symbol, len(categories), categories))
    return _dense_ranks(keys)


def refine(g: MolGraph, labels: List[int]) -> List[int]:
    """Refine labels until every atom's neighbourhood signature is stable."""
    neighbors = [g.neighbors(i) for i in range(g.num_atoms)]
    while True:
        keys = [
            (labels[v], tuple(sorted((int(g.bonds[v, u]), labels[u]) for u in neighbors[v])))
            for v in range(g.num_atoms)
        ]
        refined = _dense_ranks(keys)
        if len(set(refined)) == len(set(labels)):
            return refined
        labels = refined


def _encode(g: MolGraph, labels: List[int]) -> Encoding:
    order = sorted(range(g.num_atoms), key=lambda v: labels[v])
    symbols = tuple(g.atoms[v].symbol for v in order)
    edges = tuple(sorted(
        (min(labels[i], labels[j]), max(labels[i], labels[j]), kind.index)
        for i, j, kind in g.edges()
    ))
    return symbols, edges


class _CanonicalSearch:
    """Individualization-refinement search for the smallest encoding."""

    def __init__(self, g: MolGraph, max_leaves: int):
        self.g = g
        self.max_leaves = max_leaves
        self.leaves = 0
        self.best: Optional[Tuple[Encoding, List[int]]] = None

    def run(self) -> List[int]:
        self.visit(_initial_labels(self.g))
        if self.leaves >= self.max_leaves:
            logger.warning(
                f"Canonical search stopped after {self.leaves} leaves on a "
                f"{self.g.num_atoms}-atom graph"
            )
        return self.best[1]

    def visit(self, labels: List[int]) -> None:
        labels = refine(self.g, labels)
        counts = Counter(labels)
        if len(counts) == self.g.num_atoms:
            self.leaves += 1
            encoding = _encode(self.g, labels)
            if self.best is None or encoding < self.best[0]:
                self.best = (encoding, labels)
            return

        target = min(label for label, count in counts.items() if count > 1)
        cell = [v for v, label in enumerate(labels) if label == target]
        for chosen in cell:
            individualized = [
                2 * label + (1 if label == target and v != chosen else 0)
                for v, label in enumerate(labels)
            ]
            self.visit(individualized)
            if self.leaves >= self.max_leaves:
                return


def canonical_ranks(g: MolGraph, max_leaves: int = MAX_LEAVES) -> List[int]:
    """Canonical rank of every atom (a permutation of 0..m-1)."""
    return _CanonicalSearch(g, max_leaves).run()


def canonical_form(g: MolGraph, max_leaves: int = MAX_LEAVES) -> str:
    """
    Canonical string of a graph: equal strings iff the graphs are isomorphic.

    Args:
        g: Valid MolGraph
        max_leaves: Search budget before falling back to the first leaf found

    Returns:
        Canonical SMILES (fragments joined with '.' if g is disconnected)
    """
    ranks = canonical_ranks(g, max_leaves)
    if g.is_connected():
        root = min(range(g.num_atoms), key=lambda v: ranks[v])
        return write_smiles(g, root=root, rank=lambda v: ranks[v])
    # Disconnected graphs still need a canonical string for exact matching.
    return _fragments_form(g, ranks)


def _fragments_form(g: MolGraph, ranks: List[int]) -> str:
    remaining = set(range(g.num_atoms))
    parts = []
    while remaining:
        seed = min(remaining, key=lambda v: ranks[v])
        component = {seed}
        stack = [seed]
        while stack:
            for j in g.neighbors(stack.pop()):
                if j not in component:
                    component.add(j)
                    stack.append(j)
        remaining -= component
        nodes = sorted(component, key=lambda v: ranks[v])
        sub = g.permute(nodes)
        parts.append(write_smiles(sub, root=0))
    return ".".join(sorted(parts))


def exact_match(a: MolGraph, b: MolGraph) -> bool:
    """True iff the two graphs are isomorphic under label- and bond-preserving maps."""
    if a.num_atoms != b.num_atoms or sorted(a.symbols) != sorted(b.symbols):
        return False
    return canonical_form(a) == canonical_form(b)
