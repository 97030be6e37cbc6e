"""
Atom table: element labels and their allowed valences.
Provides centralized access to the active table.
"""

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple
import logging

from app.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AtomKind:
    """An element label with the set of total bond orders it may carry."""
    symbol: str
    max_valences: FrozenSet[int]

    def __post_init__(self):
        if not self.max_valences or any(v <= 0 for v in self.max_valences):
            raise ConfigError(f"Atom {self.symbol} needs non-empty positive valences")

    @property
    def max_valence(self) -> int:
        return max(self.max_valences)


DEFAULT_ATOMS: Tuple[Tuple[str, Tuple[int, ...]], ...] = (
    ("C", (4,)),
    ("N", (3,)),
    ("O", (2,)),
    ("S", (2, 4, 6)),
    ("P", (3, 5)),
    ("F", (1,)),
    ("Cl", (1,)),
    ("Br", (1,)),
    ("I", (1,)),
    ("H", (1,)),
    ("He", (1,)),
)

# Elements that may be written without brackets, and their aromatic lowercase forms.
ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
BRACKET_AROMATIC_SYMBOLS = {**AROMATIC_SYMBOLS, "se": "Se", "as": "As"}


class AtomTable:
    """Ordered, duplicate-free collection of AtomKinds."""

    def __init__(self, kinds: Iterable[AtomKind]):
        self._kinds: List[AtomKind] = []
        self._by_symbol: Dict[str, AtomKind] = {}
        for kind in kinds:
            self.add(kind)

    def add(self, kind: AtomKind) -> None:
        if kind.symbol in self._by_symbol:
            raise ConfigError(f"Duplicate atom symbol: {kind.symbol}")
        self._kinds.append(kind)
        self._by_symbol[kind.symbol] = kind

    def get(self, symbol: str) -> Optional[AtomKind]:
        return self._by_symbol.get(symbol)

    def __getitem__(self, symbol: str) -> AtomKind:
        return self._by_symbol[symbol]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._by_symbol

    def __iter__(self):
        return iter(self._kinds)

    def __len__(self) -> int:
        return len(self._kinds)

    @property
    def symbols(self) -> List[str]:
        return [kind.symbol for kind in self._kinds]

    @classmethod
    def default(cls, extra: str = "") -> "AtomTable":
        """
        Build the default table, optionally extended.

        Args:
            extra: Extension spec such as "B:3,Si:4,Se:2|4|6"

        Returns:
            AtomTable
        """
        table = cls(AtomKind(symbol, frozenset(vals)) for symbol, vals in DEFAULT_ATOMS)
        for symbol, valences in parse_extra_elements(extra):
            table.add(AtomKind(symbol, frozenset(valences)))
        return table


def parse_extra_elements(spec: str) -> List[Tuple[str, Tuple[int, ...]]]:
    """Parse "Sym:v|v,Sym:v" into (symbol, valences) pairs."""
    entries = []
    for chunk in filter(None, (part.strip() for part in spec.split(","))):
        symbol, sep, valences = chunk.partition(":")
        if not sep or not symbol:
            raise ConfigError(f"Bad element extension: '{chunk}'")
        try:
            values = tuple(int(v) for v in valences.split("|"))
        except ValueError:
            raise ConfigError(f"Bad valence list in element extension: '{chunk}'")
        entries.append((symbol.strip(), values))
    return entries


_atom_table: Optional[AtomTable] = None


def get_atom_table() -> AtomTable:
    """Get or create the global atom table."""
    global _atom_table
    if _atom_table is None:
        _atom_table = AtomTable.default()
    return _atom_table


def configure_atom_table(extra: str) -> AtomTable:
    """Replace the global table with the default table plus extensions."""
    global _atom_table
    _atom_table = AtomTable.default(extra)
    if extra:
        logger.info(f"Atom table extended with {extra}")
    return _atom_table
