"""
Dataset ingestion.
TSV files hold id<TAB>smiles<TAB>description rows with an optional header;
JSONL editing files hold {instruction, input, output} objects with SMILES.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from app.chem.molgraph import MolGraph
from app.chem.smiles import parse_smiles
from app.core.vocab import TokenSequence, Vocabulary, encode_instance, tokenize
from app.errors import MolDiffusionError
from app.models import DatasetRecord

logger = logging.getLogger(__name__)

GENERATION_PROMPT = "'{description}' is the description of molecule:"
HEADER_IDS = ("id", "cid", "record_id")


def instruction_for(record: DatasetRecord) -> str:
    """Generation records use the description prompt; editing records use their own task sentence."""
    if record.is_editing:
        return record.description
    return GENERATION_PROMPT.format(description=record.description)


def _parses(record: DatasetRecord, origin: str) -> bool:
    for field_name in ("smiles", "source_smiles"):
        text = getattr(record, field_name)
        if text is None:
            continue
        try:
            parse_smiles(text)
        except MolDiffusionError as e:
            logger.warning(f"{origin}: skipping record {record.record_id}: {field_name} '{text}' rejected ({e})")
            return False
    return True


def read_tsv(path: Union[str, Path]) -> List[DatasetRecord]:
    path = Path(path)
    records: List[DatasetRecord] = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if number == 1 and fields[0].strip().lower() in HEADER_IDS:
            continue
        origin = f"{path}:{number}"
        if len(fields) < 3:
            logger.warning(f"{origin}: skipping line with {len(fields)} fields, expected 3")
            continue
        record = DatasetRecord(
            record_id=fields[0].strip(),
            smiles=fields[1].strip(),
            description="\t".join(fields[2:]).strip(),
        )
        if _parses(record, origin):
            records.append(record)
    return records


def read_jsonl(path: Union[str, Path]) -> List[DatasetRecord]:
    path = Path(path)
    records: List[DatasetRecord] = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        origin = f"{path}:{number}"
        try:
            payload = json.loads(line)
            record = DatasetRecord(
                record_id=str(payload.get("id", number)),
                description=payload["instruction"].strip(),
                smiles=payload["output"].strip(),
                source_smiles=(payload.get("input") or "").strip() or None,
            )
        except (json.JSONDecodeError, KeyError, AttributeError) as e:
            logger.warning(f"{origin}: skipping malformed record ({e})")
            continue
        if _parses(record, origin):
            records.append(record)
    return records


def read_dataset(path: Union[str, Path]) -> List[DatasetRecord]:
    """Read a TSV or JSONL dataset, chosen by file suffix."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    records = read_jsonl(path) if path.suffix == ".jsonl" else read_tsv(path)
    logger.info(f"Read {len(records)} records from {path}")
    return records


def write_tsv(records: Sequence[DatasetRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("id\tsmiles\tdescription\n")
        for record in records:
            f.write(f"{record.record_id}\t{record.smiles}\t{record.description}\n")
    return path


@dataclass
class EncodedRecord:
    record: DatasetRecord
    target: MolGraph
    source: Optional[MolGraph]
    clean: TokenSequence
    instruction_length: int

    def sampling_input(self, vocab: Vocabulary, target_slots: int) -> TokenSequence:
        return encode_instance(vocab, instruction_for(self.record), target_slots, source=self.source)


def encode_records(records: Sequence[DatasetRecord], vocab: Vocabulary, target_slots: int) -> List[EncodedRecord]:
    """Encode records for training and sampling; oversized molecules are skipped with a warning."""
    encoded: List[EncodedRecord] = []
    for record in records:
        instruction = instruction_for(record)
        target = parse_smiles(record.smiles)
        source = parse_smiles(record.source_smiles) if record.source_smiles else None
        try:
            clean = encode_instance(vocab, instruction, target_slots, source=source, target=target)
        except MolDiffusionError as e:
            logger.warning(f"Skipping record {record.record_id}: {e}")
            continue
        encoded.append(EncodedRecord(record, target, source, clean, len(tokenize(instruction))))
    return encoded
