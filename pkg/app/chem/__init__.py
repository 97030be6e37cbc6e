"""
Molecular graph package: atom table, graph model, SMILES I/O, validity and
canonical form.
"""

from app.chem.atoms import AtomKind, AtomTable, configure_atom_table, get_atom_table
from app.chem.molgraph import MolGraph
from app.chem.smiles import parse_smiles, write_smiles
from app.chem.validity import ValenceViolation, is_valid
from app.chem.canonical import canonical_form, exact_match

__all__ = [
    "AtomKind",
    "AtomTable",
    "MolGraph",
    "ValenceViolation",
    "canonical_form",
    "configure_atom_table",
    "exact_match",
    "get_atom_table",
    "is_valid",
    "parse_smiles",
    "write_smiles",
]
