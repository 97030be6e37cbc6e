"""
Long training runs on the toy corpus. Deselected by default; run with -m slow.
"""

import numpy as np
import pytest

from app.chem.canonical import exact_match
from app.cli.dataset import encode_records, instruction_for
from app.cli.toy import gen_toy
from app.core.denoiser import Denoiser, DenoiserConfig
from app.core.diffusion import NoiseSchedule, chain_generators, sample, sample_many
from app.core.training import TrainConfig, train_loop
from app.core.vocab import build_text_vocab
from app.errors import MolDiffusionError
from app.metrics.evaluate import evaluate

pytestmark = pytest.mark.slow

SLOTS = 12


def toy_model(vocab) -> Denoiser:
    config = DenoiserConfig(
        layers=4, hidden=128, heads=4, max_positions=64, token_vocab_size=vocab.size, max_target_length=SLOTS
    )
    return Denoiser(config, np.random.default_rng(0))


@pytest.fixture(scope="module")
def toy_run():
    train, test = gen_toy(2000, 200, seed=0)
    vocab = build_text_vocab(instruction_for(r) for r in train)
    train_set = encode_records(train, vocab, SLOTS)
    test_set = encode_records(test, vocab, SLOTS)
    model = toy_model(vocab)
    train_config = TrainConfig(
        learning_rate=5e-4, batch_size=16, accumulation_epochs=[0], accumulation_steps=[1],
        max_steps=20000, progress=False,
    )
    train_loop(model, [e.clean for e in train_set], train_config, vocab, np.random.default_rng(1))
    return model, vocab, test_set


def report_at(toy_run, steps: int):
    model, vocab, test_set = toy_run
    inputs = [e.sampling_input(vocab, SLOTS) for e in test_set]
    graphs = sample_many(model, inputs, steps, 15, 0, vocab, NoiseSchedule(1000))
    return evaluate(list(zip(graphs, (e.target for e in test_set))))


@pytest.fixture(scope="module")
def report_100(toy_run):
    return report_at(toy_run, 100)


def test_trained_model_generates_valid_molecules(report_100) -> None:
    assert report_100.valid_fraction >= 0.85


def test_trained_model_matches_held_out_descriptions(report_100) -> None:
    assert report_100.exact_fraction >= 0.5


def test_more_steps_give_more_valid_molecules(toy_run, report_100) -> None:
    assert report_at(toy_run, 1).valid_fraction < report_100.valid_fraction


def test_memorizes_small_corpus() -> None:
    train, _ = gen_toy(32, 1, seed=3)
    vocab = build_text_vocab(instruction_for(r) for r in train)
    pairs = encode_records(train, vocab, SLOTS)
    assert len(pairs) == 32
    model = toy_model(vocab)
    train_config = TrainConfig(
        learning_rate=5e-4, batch_size=8, accumulation_epochs=[0], accumulation_steps=[1],
        max_epochs=2500, max_steps=10000, progress=False,
    )
    train_loop(model, [p.clean for p in pairs], train_config, vocab, np.random.default_rng(1))

    schedule = NoiseSchedule(1000)
    hits = 0
    for pair, rng in zip(pairs, chain_generators(7, len(pairs))):
        try:
            generated = sample(model, pair.sampling_input(vocab, SLOTS), 100, 1, rng, vocab, schedule)
        except MolDiffusionError:
            continue
        hits += exact_match(generated, pair.target)
    assert hits >= 30
