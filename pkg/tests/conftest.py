"""
Shared fixtures: a small vocabulary, a tiny denoiser and seeded generators.
"""

import numpy as np
import pytest

from app.chem.atoms import configure_atom_table
from app.chem.smiles import parse_smiles
from app.core.denoiser import Denoiser, DenoiserConfig
from app.core.vocab import Vocabulary, build_text_vocab, encode_instance

INSTRUCTIONS = [
    "a linear alkane with three carbon atoms",
    "a primary alcohol with two carbon atoms",
    "a carbon ring of size six",
    "an ether with alkyl chains of one and two carbon atoms",
]


@pytest.fixture(autouse=True)
def default_atom_table():
    configure_atom_table("")
    yield
    configure_atom_table("")


@pytest.fixture
def vocab() -> Vocabulary:
    return build_text_vocab(INSTRUCTIONS)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def tiny_config(vocab: Vocabulary, **overrides) -> DenoiserConfig:
    settings = dict(
        layers=2,
        hidden=16,
        heads=2,
        max_positions=64,
        token_vocab_size=vocab.size,
        max_target_length=8,
    )
    settings.update(overrides)
    return DenoiserConfig(**settings)


@pytest.fixture
def denoiser(vocab) -> Denoiser:
    return Denoiser(tiny_config(vocab), np.random.default_rng(7))


@pytest.fixture
def ethanol_instance(vocab):
    return encode_instance(vocab, INSTRUCTIONS[1], 5, target=parse_smiles("CCO"))
