"""
Command implementations.
Each command takes a resolved RunConfig, performs one pipeline stage and
writes a manifest next to its outputs.
"""

import json
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from app.chem.atoms import configure_atom_table
from app.chem.molgraph import MolGraph
from app.chem.smiles import parse_smiles, write_smiles
from app.cli.config import RunConfig
from app.cli.dataset import (
    GENERATION_PROMPT,
    EncodedRecord,
    encode_records,
    instruction_for,
    read_dataset,
    write_tsv,
)
from app.cli.manifest import write_manifest
from app.cli.toy import gen_toy
from app.core.checkpoint import Checkpoint, load_checkpoint
from app.core.denoiser import Denoiser
from app.core.diffusion import NoiseSchedule, chain_generators, sample_many
from app.core.training import TrainResult, pretrain_mlm, train_loop
from app.core.vocab import (
    TokenSequence,
    Vocabulary,
    build_text_vocab,
    encode_graph_only,
    encode_instance,
    encode_text_only,
    tokenize,
)
from app.errors import ConfigError, DisconnectedGraph, EmptyCorpus
from app.metrics.evaluate import evaluate, evaluate_smiles, summarize_seeds, write_report

logger = logging.getLogger(__name__)


def _require(config: RunConfig, key: str) -> str:
    value = getattr(config, key)
    if not value:
        raise ConfigError(f"'{key}' must be set for this command")
    return value


def _read_lines(path: str) -> List[str]:
    return Path(path).read_text().splitlines()


def cmd_gen_toy(config: RunConfig) -> Dict[str, Path]:
    """Write train.tsv and test.tsv under output_dir."""
    train, test = gen_toy(config.n_train, config.n_test, config.seed)
    paths = {
        "train": write_tsv(train, config.output / "train.tsv"),
        "test": write_tsv(test, config.output / "test.tsv"),
    }
    write_manifest("gen-toy", config)
    return paths


def cmd_build_vocab(config: RunConfig) -> Vocabulary:
    """Build the vocabulary from the instructions of a dataset file."""
    corpus_path = config.corpus_path or _require(config, "train_path")
    if not Path(corpus_path).exists():
        raise FileNotFoundError(f"Corpus not found: {corpus_path}")
    records = read_dataset(corpus_path)
    if not records:
        raise EmptyCorpus(f"No usable records in {corpus_path}")
    vocab = build_text_vocab((instruction_for(r) for r in records), config.min_count)
    vocab.save(config.vocab_path)
    logger.info(f"Vocabulary ({vocab.size} tokens) written to {config.vocab_path}")
    write_manifest("build-vocab", config, [corpus_path], {"vocab_digest": vocab.digest})
    return vocab


def _load_vocab(config: RunConfig) -> Vocabulary:
    path = Path(config.vocab_path)
    if not path.exists():
        raise FileNotFoundError(f"Vocabulary not found: {path}")
    return Vocabulary.load(path)


def _load_model(config: RunConfig, vocab: Vocabulary) -> Checkpoint:
    path = Path(config.checkpoint_path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return load_checkpoint(path, vocab.digest)


def _prepare_model(config: RunConfig, vocab: Vocabulary, rng: np.random.Generator) -> Tuple[Denoiser, Optional[Checkpoint]]:
    """Fresh, fine-tuned-from or resumed model; returns the checkpoint to resume from, if any."""
    if config.resume and Path(config.checkpoint_path).exists():
        checkpoint = load_checkpoint(config.checkpoint_path, vocab.digest)
        return checkpoint.build_model(), checkpoint
    if config.init_checkpoint:
        return load_checkpoint(config.init_checkpoint, vocab.digest).build_model(), None
    return Denoiser(config.denoiser_config(vocab), rng), None


def _eval_callback(
    config: RunConfig,
    vocab: Vocabulary,
    encoded: Sequence[EncodedRecord],
) -> Callable[[Denoiser, int], Dict[str, Any]]:
    """Held-out snapshot on the first eval_samples test records; uses its own seeds."""
    subset = list(encoded[: config.eval_samples])
    schedule = NoiseSchedule(config.T)

    def on_eval(model: Denoiser, step: int) -> Dict[str, Any]:
        inputs = [e.sampling_input(vocab, config.max_target_length) for e in subset]
        graphs = sample_many(model, inputs, config.steps, config.top_k, config.seed + step, vocab, schedule,
                             config.permute_positions, config.workers)
        report = evaluate(list(zip(graphs, (e.target for e in subset))))
        return {
            "valid": report.valid_fraction,
            "exact": report.exact_fraction,
            "morgan_fts": report.morgan_fts_mean,
        }

    return on_eval


def cmd_train(config: RunConfig) -> TrainResult:
    """Fine-tune (or train from scratch) on instruction/molecule pairs."""
    vocab = _load_vocab(config)
    train_path = _require(config, "train_path")
    encoded = encode_records(read_dataset(train_path), vocab, config.max_target_length)
    model_rng, train_rng = chain_generators(config.seed, 2)
    model, resume = _prepare_model(config, vocab, model_rng)

    on_eval = None
    if config.test_path and config.eval_every:
        held_out = encode_records(read_dataset(config.test_path), vocab, config.max_target_length)
        on_eval = _eval_callback(config, vocab, held_out)

    result = train_loop(
        model,
        [e.clean for e in encoded],
        config.train_config(),
        vocab,
        train_rng,
        resume=resume,
        checkpoint_path=config.checkpoint_path,
        trace_path=config.output / "trace.jsonl",
        on_eval=on_eval,
    )
    write_manifest(
        "train", config, [train_path, config.test_path, config.vocab_path, config.init_checkpoint],
        {"vocab_digest": vocab.digest, "steps_completed": result.state.step},
    )
    return result


def pretraining_corpus(encoded: Sequence[EncodedRecord], vocab: Vocabulary, mix: str) -> List[TokenSequence]:
    """Paired entries, plus text-only and graph-only entries when mix is 'all'."""
    corpus = [e.clean for e in encoded]
    if mix == "all":
        corpus += [encode_text_only(vocab, instruction_for(e.record)) for e in encoded]
        corpus += [encode_graph_only(vocab, e.target) for e in encoded]
    return corpus


def cmd_pretrain(config: RunConfig) -> TrainResult:
    """Masked-LM pretraining on the configured data mix."""
    vocab = _load_vocab(config)
    train_path = _require(config, "train_path")
    encoded = encode_records(read_dataset(train_path), vocab, config.max_target_length)
    corpus = pretraining_corpus(encoded, vocab, config.pretrain_mix)
    model_rng, train_rng = chain_generators(config.seed, 2)
    model, resume = _prepare_model(config, vocab, model_rng)
    result = pretrain_mlm(
        model,
        corpus,
        config.train_config(),
        vocab,
        train_rng,
        resume=resume,
        checkpoint_path=config.checkpoint_path,
        trace_path=config.output / "pretrain_trace.jsonl",
    )
    write_manifest(
        "pretrain", config, [train_path, config.vocab_path],
        {"vocab_digest": vocab.digest, "corpus_size": len(corpus), "steps_completed": result.state.step},
    )
    return result


def sampling_inputs(path: str, vocab: Vocabulary, target_slots: int) -> Tuple[List[TokenSequence], List[int]]:
    """
    Sampling inputs from a dataset file or a plain .txt file of descriptions.

    Returns:
        (all-masked sequences, instruction token counts)
    """
    if Path(path).suffix == ".txt":
        instructions = [GENERATION_PROMPT.format(description=line.strip()) for line in _read_lines(path) if line.strip()]
        seqs = [encode_instance(vocab, text, target_slots) for text in instructions]
        return seqs, [len(tokenize(text)) for text in instructions]
    # Every record yields an input so output lines stay aligned with the file.
    records = read_dataset(path)
    seqs = [
        encode_instance(vocab, instruction_for(r), target_slots,
                        source=parse_smiles(r.source_smiles) if r.source_smiles else None)
        for r in records
    ]
    return seqs, [len(tokenize(instruction_for(r))) for r in records]


def graph_to_line(graph: Optional[MolGraph]) -> str:
    """SMILES for one generation; empty when decoding failed or the graph is disconnected."""
    if graph is None:
        return ""
    try:
        return write_smiles(graph)
    except DisconnectedGraph:
        logger.warning(f"Generated graph with {graph.num_atoms} atoms is disconnected")
        return ""


def _generate(
    model: Denoiser,
    inputs: Sequence[TokenSequence],
    config: RunConfig,
    vocab: Vocabulary,
    steps: int,
    seed: int,
) -> List[Optional[MolGraph]]:
    return sample_many(model, inputs, steps, config.top_k, seed, vocab, NoiseSchedule(config.T),
                       config.permute_positions, config.workers)


def cmd_sample(config: RunConfig) -> List[Path]:
    """Write one SMILES file per sampling seed, one line per input instruction."""
    vocab = _load_vocab(config)
    model = _load_model(config, vocab).build_model()
    source = _require(config, "test_path")
    inputs, _ = sampling_inputs(source, vocab, config.max_target_length)
    seeds = config.sampling_seeds
    written = []
    for seed in tqdm(seeds, desc="seeds", disable=not config.progress or len(seeds) == 1):
        graphs = _generate(model, inputs, config, vocab, config.steps, seed)
        name = "generated.smi" if len(seeds) == 1 else f"generated.seed{seed}.smi"
        path = config.output / name
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [graph_to_line(g) for g in graphs]
        path.write_text("".join(line + "\n" for line in lines))
        logger.info(f"Seed {seed}: {sum(bool(l) for l in lines)}/{len(lines)} decoded, written to {path}")
        written.append(path)
    write_manifest("sample", config, [source, config.vocab_path, config.checkpoint_path],
                   {"outputs": [str(p) for p in written]})
    return written


def _references(path: str) -> Tuple[List[str], Optional[List[int]]]:
    if Path(path).suffix in (".smi", ".txt"):
        return [line.strip() for line in _read_lines(path)], None
    records = read_dataset(path)
    return [r.smiles for r in records], [len(tokenize(instruction_for(r))) for r in records]


def cmd_eval(config: RunConfig) -> Dict[str, Any]:
    """Evaluate each generated file against the references; summarize across files."""
    reference_path = config.reference_path or _require(config, "test_path")
    generated_paths = config.generated_paths or [str(config.output / "generated.smi")]
    references, lengths = _references(reference_path)
    reports = []
    for generated_path in generated_paths:
        lines = _read_lines(generated_path)
        report = evaluate_smiles(lines, references, lengths)
        stem = Path(generated_path).stem
        write_report(report, config.output / f"{stem}.report.json")
        reports.append(report)
    summary: Dict[str, Any] = {"reports": [r.to_dict() for r in reports]}
    if len(reports) > 1:
        summary["seed_summary"] = summarize_seeds(reports)
        (config.output / "seed_summary.json").write_text(json.dumps(summary["seed_summary"], indent=2) + "\n")
    write_manifest("eval", config, [reference_path, *generated_paths])
    return summary


def cmd_ablate_steps(config: RunConfig) -> List[Dict[str, Any]]:
    """Sample and evaluate the test set at each step count, timing every run."""
    vocab = _load_vocab(config)
    model = _load_model(config, vocab).build_model()
    test_path = _require(config, "test_path")
    encoded = encode_records(read_dataset(test_path), vocab, config.max_target_length)
    inputs = [e.sampling_input(vocab, config.max_target_length) for e in encoded]
    lengths = [e.instruction_length for e in encoded]
    rows = []
    for steps in config.ablation_steps:
        if steps > config.T:
            logger.warning(f"Skipping steps={steps}: exceeds T={config.T}")
            continue
        start = time.perf_counter()
        graphs = _generate(model, inputs, config, vocab, steps, config.seed)
        elapsed = time.perf_counter() - start
        report = evaluate(list(zip(graphs, (e.target for e in encoded))), lengths)
        rows.append({
            "steps": steps,
            "valid": report.valid_fraction,
            "exact": report.exact_fraction,
            "morgan_fts": report.morgan_fts_mean,
            "seconds_per_sample": elapsed / max(len(inputs), 1),
        })
        logger.info(f"steps={steps}: {rows[-1]}")
    path = config.output / "ablation.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(rows, indent=2) + "\n")
    write_manifest("ablate-steps", config, [test_path, config.vocab_path, config.checkpoint_path])
    return rows


COMMANDS: Dict[str, Callable[[RunConfig], Any]] = {
    "gen-toy": cmd_gen_toy,
    "build-vocab": cmd_build_vocab,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate-steps": cmd_ablate_steps,
}


def run_command(name: str, config: RunConfig) -> Any:
    """Configure the atom table, then dispatch."""
    if name not in COMMANDS:
        raise ConfigError(f"Unknown command '{name}'; choose from {sorted(COMMANDS)}")
    configure_atom_table(config.extra_elements)
    logger.info(f"Running {name}")
    return COMMANDS[name](config)
