import re

from app.chem.canonical import canonical_form
from app.chem.smiles import parse_smiles
from app.cli.toy import MAX_HEAVY_ATOMS, gen_toy, toy_molecules


def test_molecules_are_small_and_distinct() -> None:
    molecules = toy_molecules()
    forms = {canonical_form(parse_smiles(m.smiles)) for m in molecules}
    assert len(forms) == len(molecules)
    assert all(parse_smiles(m.smiles).num_atoms <= MAX_HEAVY_ATOMS for m in molecules)


def test_descriptions_name_one_molecule() -> None:
    owners = {}
    for molecule in toy_molecules():
        for description in molecule.descriptions:
            assert owners.setdefault(description, molecule.smiles) == molecule.smiles
            assert not re.search(r"\d", description)


def test_splits_are_disjoint_by_molecule() -> None:
    train, test = gen_toy(200, 40, seed=5)
    assert len(train) == 200 and len(test) == 40
    train_forms = {canonical_form(parse_smiles(r.smiles)) for r in train}
    test_forms = {canonical_form(parse_smiles(r.smiles)) for r in test}
    assert not train_forms & test_forms
    assert train[0].record_id == "train00000"
    assert test[-1].record_id == "test00039"


def test_generation_is_seeded() -> None:
    assert gen_toy(20, 5, seed=1) == gen_toy(20, 5, seed=1)
    assert gen_toy(20, 5, seed=1) != gen_toy(20, 5, seed=2)


def test_counts_agree_with_their_nouns() -> None:
    descriptions = [d for m in toy_molecules() for d in m.descriptions]
    assert "a linear alkane with one carbon atom" in descriptions
    assert "a linear alkane with two carbon atoms" in descriptions
    assert "a carboxylic acid with one carbon atom" in descriptions
    assert not any(re.search(r"\bone (carbon atoms|carbons|ring carbons)\b", d) for d in descriptions)
