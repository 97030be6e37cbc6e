"""
Morgan-style circular fingerprints and Tanimoto similarity.

Atom codes are 64-bit FNV-1a hashes of a fixed byte serialization:
integers as 8-byte little-endian two's complement, strings as an 8-byte
length followed by their UTF-8 bytes, tuples as the concatenation of their
items. Initial codes hash (element, degree, 2 x bond-order sum); round r
hashes (r, own code, sorted (bond category index, neighbour code) pairs).
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Union

import numpy as np

from app.chem.molgraph import MolGraph
from app.errors import WidthMismatch

logger = logging.getLogger(__name__)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

DEFAULT_RADIUS = 2
DEFAULT_WIDTH = 2048

Serializable = Union[int, str, tuple, list]


def serialize(value: Serializable) -> bytes:
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return (value & _MASK64).to_bytes(8, "little")
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return len(raw).to_bytes(8, "little") + raw
    if isinstance(value, (tuple, list)):
        return b"".join(serialize(item) for item in value)
    raise TypeError(f"Cannot serialize {type(value).__name__} for hashing")


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def hash_code(value: Serializable) -> int:
    return fnv1a64(serialize(value))


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width bitset stored as a boolean array."""
    bits: np.ndarray

    def __post_init__(self):
        width = self.bits.shape[0]
        if width < 1 or width & (width - 1):
            raise WidthMismatch(f"Fingerprint width must be a power of two, got {width}")

    @property
    def width(self) -> int:
        return int(self.bits.shape[0])

    @property
    def on_bits(self) -> List[int]:
        return np.flatnonzero(self.bits).tolist()

    @classmethod
    def from_indices(cls, indices: Iterable[int], width: int = DEFAULT_WIDTH) -> "Fingerprint":
        bits = np.zeros(width, dtype=bool)
        bits[list(indices)] = True
        return cls(bits)


def atom_codes(g: MolGraph, radius: int = DEFAULT_RADIUS) -> List[List[int]]:
    """Per-round atom codes; entry r holds the codes after r rounds."""
    codes = [
        hash_code((atom.symbol, len(g.neighbors(i)), int(round(2 * g.bond_order_sum(i)))))
        for i, atom in enumerate(g.atoms)
    ]
    rounds = [codes]
    for r in range(1, radius + 1):
        previous = rounds[-1]
        codes = []
        for i in range(g.num_atoms):
            env = sorted((int(g.bonds[i, j]), previous[j]) for j in g.neighbors(i))
            codes.append(hash_code((r, previous[i], tuple(env))))
        rounds.append(codes)
    return rounds


def morgan_fingerprint(g: MolGraph, radius: int = DEFAULT_RADIUS, width: int = DEFAULT_WIDTH) -> Fingerprint:
    """
    Circular fingerprint of a molecule.

    Args:
        g: Molecular graph
        radius: Number of neighbourhood-hashing rounds
        width: Bit width, a power of two

    Returns:
        Fingerprint with bit (code mod width) set for every code of every round
    """
    bits = np.zeros(width, dtype=bool)
    fingerprint = Fingerprint(bits)
    for codes in atom_codes(g, radius):
        for code in codes:
            bits[code % width] = True
    return fingerprint


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|, or 1.0 when both are empty."""
    if a.width != b.width:
        raise WidthMismatch(f"Cannot compare fingerprints of width {a.width} and {b.width}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a.bits & b.bits)) / union
