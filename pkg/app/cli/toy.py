"""
Synthetic instruction/molecule corpus.
Templated English descriptions of small molecule families; each description
names exactly one molecule up to isomorphism.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from app.chem.canonical import canonical_form
from app.chem.smiles import parse_smiles
from app.models import DatasetRecord

logger = logging.getLogger(__name__)

MAX_HEAVY_ATOMS = 12

NUMBER_WORDS = {
    1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six",
    7: "seven", 8: "eight", 9: "nine", 10: "ten", 11: "eleven", 12: "twelve",
}


def count_of(n: int, noun: str) -> str:
    """Spelled-out count with the noun pluralized to agree, e.g. "one carbon atom"."""
    return f"{NUMBER_WORDS[n]} {noun}" + ("" if n == 1 else "s")


@dataclass(frozen=True)
class ToyMolecule:
    smiles: str
    descriptions: Tuple[str, ...]


def _alkanes() -> List[ToyMolecule]:
    return [
        ToyMolecule("C" * n, (
            f"a linear alkane with {count_of(n, 'carbon atom')}",
            f"the straight-chain alkane containing {count_of(n, 'carbon')}",
            f"an unbranched saturated hydrocarbon with {count_of(n, 'carbon atom')}",
        ))
        for n in range(1, 13)
    ]


def _alcohols() -> List[ToyMolecule]:
    return [
        ToyMolecule("C" * n + "O", (
            f"a primary alcohol with {count_of(n, 'carbon atom')}",
            f"a linear alcohol with a terminal hydroxy group and {count_of(n, 'carbon')}",
        ))
        for n in range(1, 12)
    ]


def _rings() -> List[ToyMolecule]:
    return [
        ToyMolecule("C1" + "C" * (n - 1) + "1", (
            f"a carbon ring of size {NUMBER_WORDS[n]}",
            f"a cycloalkane with {count_of(n, 'ring carbon')}",
        ))
        for n in range(3, 9)
    ]


def _ethers() -> List[ToyMolecule]:
    molecules = []
    for a in range(1, MAX_HEAVY_ATOMS):
        for b in range(a, MAX_HEAVY_ATOMS - a):
            molecules.append(ToyMolecule("C" * a + "O" + "C" * b, (
                f"an ether with alkyl chains of {NUMBER_WORDS[a]} and {NUMBER_WORDS[b]} carbon atoms",
                f"a dialkyl ether joining a {NUMBER_WORDS[a]} carbon chain and a {NUMBER_WORDS[b]} carbon chain",
            )))
    return molecules


def _amines() -> List[ToyMolecule]:
    return [
        ToyMolecule("C" * n + "N", (
            f"a primary amine with {count_of(n, 'carbon atom')}",
            f"a linear alkylamine with a terminal amino group and {count_of(n, 'carbon')}",
        ))
        for n in range(1, 12)
    ]


def _alkenes() -> List[ToyMolecule]:
    return [
        ToyMolecule("C=C" + "C" * (n - 2), (
            f"a terminal alkene with {count_of(n, 'carbon atom')}",
            f"a linear alkene with one terminal double bond and {count_of(n, 'carbon')}",
        ))
        for n in range(2, 13)
    ]


def _acids() -> List[ToyMolecule]:
    return [
        ToyMolecule("C" * (n - 1) + "C(=O)O", (
            f"a carboxylic acid with {count_of(n, 'carbon atom')}",
            f"a linear saturated fatty acid with {count_of(n, 'carbon')}",
        ))
        for n in range(1, MAX_HEAVY_ATOMS - 1)
    ]


def toy_molecules() -> List[ToyMolecule]:
    """All toy molecules, one entry per canonical form."""
    seen: Dict[str, ToyMolecule] = {}
    for family in (_alkanes, _alcohols, _rings, _ethers, _amines, _alkenes, _acids):
        for molecule in family():
            key = canonical_form(parse_smiles(molecule.smiles))
            if key in seen:
                raise ValueError(f"Toy molecule {molecule.smiles} duplicates {seen[key].smiles}")
            seen[key] = molecule
    return list(seen.values())


def gen_toy(n_train: int, n_test: int, seed: int) -> Tuple[List[DatasetRecord], List[DatasetRecord]]:
    """
    Build train and test records over molecule-disjoint splits.

    Args:
        n_train: Number of training records
        n_test: Number of test records
        seed: Seed for the split and record draws

    Returns:
        (train records, test records)
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must both be at least 1")
    rng = np.random.default_rng(seed)
    molecules = toy_molecules()
    order = rng.permutation(len(molecules))
    held_out = max(1, min(len(molecules) - 1, round(len(molecules) * n_test / (n_train + n_test))))
    test_pool = [molecules[i] for i in order[:held_out]]
    train_pool = [molecules[i] for i in order[held_out:]]

    def draw(pool: List[ToyMolecule], count: int, prefix: str) -> List[DatasetRecord]:
        records = []
        for k in range(count):
            molecule = pool[int(rng.integers(len(pool)))]
            description = molecule.descriptions[int(rng.integers(len(molecule.descriptions)))]
            records.append(DatasetRecord(f"{prefix}{k:05d}", description, molecule.smiles))
        return records

    train, test = draw(train_pool, n_train, "train"), draw(test_pool, n_test, "test")
    logger.info(
        f"Toy corpus: {len(train_pool)} train / {len(test_pool)} test molecules, "
        f"{len(train)} / {len(test)} records"
    )
    return train, test
