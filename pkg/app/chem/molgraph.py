"""
Molecular graph data model.
A labeled undirected graph: atom kinds plus a symmetric bond-category matrix.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from app.chem.atoms import AtomKind
from app.errors import InvalidGraph
from app.models import BondKind


@dataclass(frozen=True, eq=False)
class MolGraph:
    """
    Immutable molecular graph.

    Attributes:
        atoms: Ordered atom kinds (length m)
        bonds: m x m int8 matrix of BondKind indices, symmetric, None on the diagonal
    """
    atoms: Tuple[AtomKind, ...]
    bonds: np.ndarray

    def __post_init__(self):
        m = len(self.atoms)
        if m < 1:
            raise InvalidGraph("A molecule needs at least one atom")
        bonds = np.asarray(self.bonds, dtype=np.int8)
        if bonds.shape != (m, m):
            raise InvalidGraph(f"Bond matrix shape {bonds.shape} does not match {m} atoms")
        if not np.array_equal(bonds, bonds.T):
            raise InvalidGraph("Bond matrix is not symmetric")
        if np.any(np.diag(bonds) != BondKind.NONE.index):
            raise InvalidGraph("Bond matrix diagonal must be None")
        if bonds.min() < 0 or bonds.max() >= len(BondKind):
            raise InvalidGraph("Bond matrix holds an unknown category")
        bonds = bonds.copy()
        bonds.setflags(write=False)
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", bonds)

    @classmethod
    def from_bonds(
        cls,
        atoms: Sequence[AtomKind],
        bonds: Iterable[Tuple[int, int, BondKind]],
    ) -> "MolGraph":
        """
        Build a graph from an edge list.

        Args:
            atoms: Atom kinds in node order
            bonds: (i, j, kind) triples; each unordered pair at most once

        Returns:
            MolGraph
        """
        m = len(atoms)
        matrix = np.zeros((m, m), dtype=np.int8)
        for i, j, kind in bonds:
            if i == j:
                raise InvalidGraph(f"Self bond on atom {i}")
            matrix[i, j] = matrix[j, i] = BondKind(kind).index
        return cls(tuple(atoms), matrix)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def symbols(self) -> List[str]:
        return [atom.symbol for atom in self.atoms]

    def bond(self, i: int, j: int) -> BondKind:
        return BondKind.from_index(int(self.bonds[i, j]))

    def neighbors(self, i: int) -> List[int]:
        return [int(j) for j in np.nonzero(self.bonds[i])[0]]

    def edges(self) -> Iterator[Tuple[int, int, BondKind]]:
        """Yield each bonded unordered pair once, i < j."""
        rows, cols = np.nonzero(np.triu(self.bonds, k=1))
        for i, j in zip(rows.tolist(), cols.tolist()):
            yield i, j, BondKind.from_index(int(self.bonds[i, j]))

    def bond_order_sum(self, i: int) -> float:
        return sum(self.bond(i, j).order for j in self.neighbors(i))

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            for j in self.neighbors(stack.pop()):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.num_atoms

    def permute(self, order: Sequence[int]) -> "MolGraph":
        """Relabel nodes: new node k is old node order[k]."""
        order = np.asarray(order)
        return MolGraph(
            tuple(self.atoms[k] for k in order.tolist()),
            self.bonds[np.ix_(order, order)],
        )

    def with_bond(self, i: int, j: int, kind: BondKind) -> "MolGraph":
        matrix = self.bonds.copy()
        matrix[i, j] = matrix[j, i] = kind.index
        return MolGraph(self.atoms, matrix)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "atoms": self.symbols,
            "bonds": [[i, j, kind.value] for i, j, kind in self.edges()],
        }

    def __repr__(self) -> str:
        return f"MolGraph(atoms={self.symbols}, bonds={[(i, j, k.value) for i, j, k in self.edges()]})"
