"""
Valence validity check.
An atom is valid when the sum of its incident bond orders does not exceed its
largest allowed valence; implicit hydrogens fill whatever remains.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

from app.chem.molgraph import MolGraph


@dataclass(frozen=True)
class ValenceViolation:
    """One atom whose bond-order sum exceeds its maximum valence."""
    atom_index: int
    bond_order_sum: float
    max_valence: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "atom_index": self.atom_index,
            "bond_order_sum": self.bond_order_sum,
            "max_valence": self.max_valence,
        }


def is_valid(g: MolGraph) -> Tuple[bool, List[ValenceViolation]]:
    """
    Check the valence rule on every atom.

    Args:
        g: Graph to check (connectivity is not required)

    Returns:
        (flag, diagnostics) where diagnostics lists every violating atom
    """
    violations = []
    for i, atom in enumerate(g.atoms):
        total = g.bond_order_sum(i)
        if total > atom.max_valence:
            violations.append(ValenceViolation(i, total, atom.max_valence))
    return not violations, violations
