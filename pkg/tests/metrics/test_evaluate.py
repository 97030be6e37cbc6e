import csv
import json

import pytest

from app.chem.smiles import parse_smiles
from app.errors import EmptyEvaluation
from app.metrics.evaluate import evaluate, evaluate_smiles, parse_generated, summarize_seeds, write_report
from app.metrics.fingerprint import morgan_fingerprint, tanimoto
from app.models import EvalReport

REFERENCES = ["CCO", "c1ccccc1", "CC(=O)O", "CCN"]


def test_identity_report() -> None:
    report = evaluate_smiles(REFERENCES, REFERENCES)
    assert (report.valid_fraction, report.exact_fraction, report.morgan_fts_mean) == (1.0, 1.0, 1.0)
    assert report.n_total == 4


def test_unparseable_generations_score_zero() -> None:
    report = evaluate_smiles(["C(", "", "Xx", "C1CC"], REFERENCES)
    assert (report.valid_fraction, report.exact_fraction, report.morgan_fts_mean) == (0.0, 0.0, 0.0)
    assert report.records[1].generated_smiles is None


def test_mixed_set() -> None:
    ethanol = parse_smiles("CCO")
    pairs = [
        (parse_smiles("CCO"), ethanol),
        (parse_smiles("OCC"), ethanol),
        (parse_smiles("CC"), ethanol),
        (parse_smiles("CC(C)(C)(C)(C)C"), ethanol),
    ]
    report = evaluate(pairs)
    assert report.valid_fraction == 0.75
    assert report.exact_fraction == 0.5
    partial = tanimoto(morgan_fingerprint(parse_smiles("CC")), morgan_fingerprint(ethanol))
    assert 0.0 < partial < 1.0
    assert report.morgan_fts_mean == pytest.approx((2.0 + partial) / 4)
    assert [r.valid for r in report.records] == [True, True, True, False]
    assert report.records[3].morgan_fts == 0.0


def test_exact_implies_full_similarity() -> None:
    generated = ["OCC", "C1=CC=CC=C1", "OC(C)=O", "NCC", "CCC"]
    report = evaluate_smiles(generated, REFERENCES + ["CCO"])
    for record in report.records:
        if record.exact:
            assert record.morgan_fts == 1.0
    assert report.exact_fraction == pytest.approx(0.6)


def test_fts_by_instruction_length() -> None:
    report = evaluate_smiles(["CCO", "CC", "CCO"], ["CCO", "CCO", "CCO"], instruction_lengths=[3, 20, 200])
    assert set(report.fts_by_length) == {"0-15", "16-31", "128+"}
    assert report.fts_by_length["0-15"] == 1.0


def test_empty_evaluation() -> None:
    with pytest.raises(EmptyEvaluation):
        evaluate([])
    with pytest.raises(EmptyEvaluation):
        summarize_seeds([])


def test_length_mismatch() -> None:
    with pytest.raises(ValueError):
        evaluate_smiles(["CCO"], REFERENCES)


def test_parse_generated() -> None:
    assert parse_generated("  \n") is None
    assert parse_generated("C1CC") is None
    assert parse_generated("CCO\n").num_atoms == 3


def test_summarize_seeds() -> None:
    reports = [
        EvalReport(n_total=2, valid_fraction=1.0, exact_fraction=0.5, morgan_fts_mean=0.75),
        EvalReport(n_total=2, valid_fraction=0.5, exact_fraction=0.5, morgan_fts_mean=0.25),
    ]
    summary = summarize_seeds(reports)
    assert summary["valid_fraction"] == {"mean": 0.75, "std": 0.25}
    assert summary["exact_fraction"] == {"mean": 0.5, "std": 0.0}
    assert summary["morgan_fts_mean"]["mean"] == 0.5


def test_write_report(tmp_path) -> None:
    report = evaluate_smiles(["CCO", "C("], ["CCO", "CC"])
    path = write_report(report, tmp_path / "out" / "report.json", extra={"seed": 3})
    payload = json.loads(path.read_text())
    assert payload["valid_fraction"] == 0.5
    assert payload["seed"] == 3
    assert payload["fcd"] is None
    with open(tmp_path / "out" / "report.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [row["valid"] for row in rows] == ["True", "False"]
    assert rows[1]["generated_smiles"] == "C("
