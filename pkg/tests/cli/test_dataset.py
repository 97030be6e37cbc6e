import json

import pytest

from app.cli.dataset import encode_records, instruction_for, read_dataset, read_jsonl, read_tsv, write_tsv
from app.models import DatasetRecord, SegmentTag



def test_read_tsv_with_header_and_bad_rows(tmp_path, caplog) -> None:
    path = tmp_path / "data.tsv"
    path.write_text(
        "cid\tsmiles\tdescription\n"
        "1\tCCO\tThe molecule is ethanol.\n"
        "2\tC1CC\tA broken ring.\n"
        "3\tCC\n"
        "\n"
        "4\tc1ccccc1\tThe molecule is benzene.\twith a tab\n"
    )
    records = read_tsv(path)
    assert [r.record_id for r in records] == ["1", "4"]
    assert records[1].description == "The molecule is benzene.\twith a tab"
    assert "skipping" in caplog.text


def test_read_jsonl_editing_records(tmp_path) -> None:
    path = tmp_path / "edit.jsonl"
    lines = [
        {"instruction": "Add a hydroxyl group to the molecule.", "input": "CC", "output": "CCO"},
        {"instruction": "Write ethane.", "input": "", "output": "CC"},
        {"instruction": "missing output"},
        "not json",
    ]
    path.write_text("\n".join(json.dumps(x) if isinstance(x, dict) else x for x in lines) + "\n")
    records = read_jsonl(path)
    assert len(records) == 2
    assert records[0].is_editing and records[0].source_smiles == "CC"
    assert not records[1].is_editing
    assert read_dataset(path) == records


def test_read_dataset_missing(tmp_path) -> None:
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "nope.tsv")


def test_write_then_read(tmp_path) -> None:
    records = [DatasetRecord("train00000", "a carbon ring of size six", "C1CCCCC1")]
    path = write_tsv(records, tmp_path / "out" / "train.tsv")
    assert read_tsv(path) == records


def test_instruction_prompts() -> None:
    generation = DatasetRecord("1", "a carbon ring", "C1CC1")
    editing = DatasetRecord("2", "Remove the oxygen.", "CC", source_smiles="CCO")
    assert instruction_for(generation) == "'a carbon ring' is the description of molecule:"
    assert instruction_for(editing) == "Remove the oxygen."


def test_encode_records_skips_oversized(vocab) -> None:
    records = [
        DatasetRecord("1", "a carbon ring", "C1CC1"),
        DatasetRecord("2", "a long chain", "CCCCCC"),
        DatasetRecord("3", "Add oxygen.", "CCO", source_smiles="CC"),
    ]
    encoded = encode_records(records, vocab, 4)
    assert [e.record.record_id for e in encoded] == ["1", "3"]
    editing = encoded[1]
    assert editing.clean.num_source == 2
    sampling = editing.sampling_input(vocab, 4)
    assert sampling.num_source == 2
    assert list(sampling.target_nodes) == [vocab.mask_id] * 4
    assert SegmentTag.SOURCE_GRAPH in sampling.segment_tags
    assert encoded[0].instruction_length == 11
