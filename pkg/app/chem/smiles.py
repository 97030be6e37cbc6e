"""
SMILES reader and writer for the supported subset.
Converts between SMILES text and MolGraph without external chemistry libraries.
Implicit hydrogens never become nodes; charges, isotopes and stereo marks are
read and discarded.
"""

import re
import logging
from collections import defaultdict
from typing import Callable, Dict, List, Optional, Set, Tuple

from app.chem.atoms import (
    AROMATIC_SYMBOLS,
    BRACKET_AROMATIC_SYMBOLS,
    ORGANIC_SUBSET,
    AtomKind,
    AtomTable,
    get_atom_table,
)
from app.chem.molgraph import MolGraph
from app.errors import (
    DanglingRingClosure,
    DisconnectedGraph,
    EmptyInput,
    MultipleFragments,
    UnbalancedParenthesis,
    UnexpectedCharacter,
    UnknownElement,
)
from app.models import BondKind

logger = logging.getLogger(__name__)

BOND_SYMBOLS: Dict[str, BondKind] = {
    "-": BondKind.SINGLE,
    "=": BondKind.DOUBLE,
    "#": BondKind.TRIPLE,
    ":": BondKind.AROMATIC,
    "/": BondKind.SINGLE,
    "\\": BondKind.SINGLE,
}

BRACKET_PATTERN = re.compile(
    r"^(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|se|as|[bcnops])"
    r"(?P<chiral>@{1,2}(?:TH|AL|SP|TB|OH)?\d*)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>[+-]{1,2}\d*)?"
    r"(?::\d+)?$"
)


class _SmilesReader:
    """Single-pass reader holding the parse state for one SMILES string."""

    def __init__(self, text: str, table: AtomTable):
        self.text = text
        self.table = table
        self.atoms: List[AtomKind] = []
        self.aromatic: List[bool] = []
        self.bonds: Dict[Tuple[int, int], BondKind] = {}
        self.prev: Optional[int] = None
        self.pending: Optional[Tuple[str, int]] = None
        self.branches: List[Tuple[int, int]] = []
        self.rings: Dict[int, Tuple[int, Optional[str], int]] = {}
        self.discarded: Set[str] = set()

    def offset(self, i: int) -> int:
        return len(self.text[:i].encode("utf-8"))

    def fail(self, error_cls, message: str, i: int):
        raise error_cls(message, self.offset(i), self.text)

    def read(self) -> MolGraph:
        text = self.text
        i = 0
        while i < len(text):
            ch = text[i]
            if ch == "(":
                if self.prev is None or self.pending is not None:
                    self.fail(UnexpectedCharacter, "Branch opened without an atom", i)
                self.branches.append((self.prev, i))
                i += 1
            elif ch == ")":
                if not self.branches:
                    self.fail(UnbalancedParenthesis, "Unmatched ')'", i)
                if self.pending is not None:
                    self.fail(UnexpectedCharacter, "Bond symbol before ')'", self.pending[1])
                self.prev, _ = self.branches.pop()
                i += 1
            elif ch in BOND_SYMBOLS:
                if self.prev is None or self.pending is not None:
                    self.fail(UnexpectedCharacter, f"Unexpected bond symbol '{ch}'", i)
                if ch in "/\\":
                    self.discarded.add("directional bond")
                self.pending = (ch, i)
                i += 1
            elif ch.isdigit() or ch == "%":
                i = self.read_ring(i)
            elif ch == ".":
                self.fail(MultipleFragments, "Multi-fragment SMILES is not supported", i)
            elif ch == "[":
                i = self.read_bracket(i)
            elif ch.isupper():
                i = self.read_organic(i)
            elif ch in AROMATIC_SYMBOLS:
                self.add_atom(AROMATIC_SYMBOLS[ch], True, i)
                i += 1
            else:
                self.fail(UnexpectedCharacter, f"Unexpected character '{ch}'", i)

        if self.pending is not None:
            self.fail(UnexpectedCharacter, "Dangling bond symbol", self.pending[1])
        if self.branches:
            self.fail(UnbalancedParenthesis, "Unclosed '('", self.branches[-1][1])
        if self.rings:
            ring = min(self.rings, key=lambda n: self.rings[n][2])
            self.fail(DanglingRingClosure, f"Ring bond {ring} never closed", self.rings[ring][2])
        if not self.atoms:
            self.fail(EmptyInput, "No atoms in SMILES", 0)
        for feature in sorted(self.discarded):
            logger.warning(f"Discarded {feature} while reading '{self.text}'")

        return MolGraph.from_bonds(
            self.atoms, ((i, j, kind) for (i, j), kind in self.bonds.items())
        )

    def read_ring(self, i: int) -> int:
        start = i
        if self.text[i] == "%":
            digits = self.text[i + 1:i + 3]
            if len(digits) != 2 or not digits.isdigit():
                self.fail(UnexpectedCharacter, "'%' must be followed by two digits", i)
            number, i = int(digits), i + 3
        else:
            number, i = int(self.text[i]), i + 1
        if self.prev is None:
            self.fail(UnexpectedCharacter, "Ring bond before any atom", start)

        symbol = self.pending[0] if self.pending else None
        self.pending = None
        if number in self.rings:
            partner, open_symbol, _ = self.rings.pop(number)
            if partner == self.prev or self.bond_key(partner, self.prev) in self.bonds:
                self.fail(UnexpectedCharacter, f"Ring bond {number} duplicates a bond", start)
            self.add_bond(partner, self.prev, symbol or open_symbol)
        else:
            self.rings[number] = (self.prev, symbol, start)
        return i

    def read_bracket(self, i: int) -> int:
        end = self.text.find("]", i)
        if end < 0:
            self.fail(UnexpectedCharacter, "Unterminated bracket atom", i)
        match = BRACKET_PATTERN.match(self.text[i + 1:end])
        if match is None:
            self.fail(UnexpectedCharacter, f"Malformed bracket atom '{self.text[i:end + 1]}'", i)
        if match.group("isotope"):
            self.discarded.add("isotope")
        if match.group("chiral"):
            self.discarded.add("chirality")
        if match.group("charge"):
            self.discarded.add("charge")
        symbol = match.group("symbol")
        aromatic = symbol in BRACKET_AROMATIC_SYMBOLS
        if aromatic:
            symbol = BRACKET_AROMATIC_SYMBOLS[symbol]
        self.add_atom(symbol, aromatic, i + 1 + (len(match.group("isotope") or "")))
        return end + 1

    def read_organic(self, i: int) -> int:
        two = self.text[i:i + 2]
        symbol = two if two in ("Cl", "Br") else self.text[i]
        if symbol not in ORGANIC_SUBSET:
            self.fail(UnknownElement, f"'{symbol}' is not an organic-subset element", i)
        self.add_atom(symbol, False, i)
        return i + len(symbol)

    def add_atom(self, symbol: str, aromatic: bool, i: int) -> None:
        kind = self.table.get(symbol)
        if kind is None:
            self.fail(UnknownElement, f"Unknown element '{symbol}'", i)
        index = len(self.atoms)
        self.atoms.append(kind)
        self.aromatic.append(aromatic)
        if self.prev is not None:
            self.add_bond(self.prev, index, self.pending[0] if self.pending else None)
        self.prev = index
        self.pending = None

    @staticmethod
    def bond_key(i: int, j: int) -> Tuple[int, int]:
        return (i, j) if i < j else (j, i)

    def add_bond(self, i: int, j: int, symbol: Optional[str]) -> None:
        if symbol is not None:
            kind = BOND_SYMBOLS[symbol]
        elif self.aromatic[i] and self.aromatic[j]:
            kind = BondKind.AROMATIC
        else:
            kind = BondKind.SINGLE
        self.bonds[self.bond_key(i, j)] = kind


def parse_smiles(text: str, table: Optional[AtomTable] = None) -> MolGraph:
    """
    Parse a SMILES string into a MolGraph.

    Args:
        text: SMILES in the supported subset
        table: Atom table (defaults to the global table)

    Returns:
        MolGraph with heavy atoms only

    Raises:
        SmilesError subclass identifying the byte offset of the failure
    """
    if text is None or not text.strip():
        raise EmptyInput("Empty SMILES", 0, text or "")
    return _SmilesReader(text.strip(), table or get_atom_table()).read()


def _writes_lowercase(g: MolGraph, i: int) -> bool:
    symbol = g.atoms[i].symbol
    if symbol.lower() not in BRACKET_AROMATIC_SYMBOLS:
        return False
    return any(g.bond(i, j) is BondKind.AROMATIC for j in g.neighbors(i))


def _atom_text(symbol: str, lowercase: bool) -> str:
    text = symbol.lower() if lowercase else symbol
    if symbol in ORGANIC_SUBSET:
        return text
    return f"[{text}]"


def _bond_text(kind: BondKind, both_lowercase: bool) -> str:
    if kind is BondKind.AROMATIC:
        return "" if both_lowercase else ":"
    if kind is BondKind.SINGLE:
        return "-" if both_lowercase else ""
    return {BondKind.DOUBLE: "=", BondKind.TRIPLE: "#"}[kind]


def _ring_label(number: int) -> str:
    return str(number) if number < 10 else f"%{number:02d}"


def write_smiles(
    g: MolGraph,
    root: int = 0,
    rank: Optional[Callable[[int], int]] = None,
) -> str:
    """
    Serialize a connected MolGraph to SMILES.

    Args:
        g: Connected graph
        root: Atom the traversal starts from
        rank: Neighbour visiting priority (defaults to atom index)

    Returns:
        SMILES string that re-parses to a graph isomorphic to g

    Raises:
        DisconnectedGraph: If g has more than one fragment
    """
    if not g.is_connected():
        raise DisconnectedGraph(f"Cannot write a disconnected graph with {g.num_atoms} atoms")
    rank = rank or (lambda i: i)
    lowercase = [_writes_lowercase(g, i) for i in range(g.num_atoms)]

    order: Dict[int, int] = {}
    parents: Dict[int, Optional[int]] = {}
    children: Dict[int, List[int]] = defaultdict(list)
    opens: Dict[int, List[int]] = defaultdict(list)
    closes: Dict[int, List[int]] = defaultdict(list)
    seen_rings: Set[Tuple[int, int]] = set()

    def visit(u: int, parent: Optional[int]) -> None:
        order[u] = len(order)
        parents[u] = parent
        for v in sorted(g.neighbors(u), key=rank):
            if v == parent or parents.get(v) == u:
                continue
            if v in order:
                key = (min(u, v), max(u, v))
                if key not in seen_rings:
                    seen_rings.add(key)
                    opens[v].append(u)
                    closes[u].append(v)
            else:
                children[u].append(v)
                visit(v, u)

    visit(root, None)

    pieces: List[str] = []
    free: List[int] = list(range(1, 100))
    labels: Dict[Tuple[int, int], int] = {}

    def bond_text(u: int, v: int) -> str:
        return _bond_text(g.bond(u, v), lowercase[u] and lowercase[v])

    def emit(u: int) -> None:
        pieces.append(_atom_text(g.atoms[u].symbol, lowercase[u]))
        for v in closes[u]:
            number = labels.pop((v, u))
            pieces.append(_ring_label(number))
            free.append(number)
            free.sort()
        for v in sorted(opens[u], key=lambda w: order[w]):
            number = free.pop(0)
            labels[(u, v)] = number
            pieces.append(bond_text(u, v) + _ring_label(number))
        for index, v in enumerate(children[u]):
            last = index == len(children[u]) - 1
            if not last:
                pieces.append("(")
            pieces.append(bond_text(u, v))
            emit(v)
            if not last:
                pieces.append(")")

    emit(root)
    return "".join(pieces)
