"""
Evaluation of generated molecules against references.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.chem.canonical import exact_match
from app.chem.molgraph import MolGraph
from app.chem.smiles import parse_smiles, write_smiles
from app.chem.validity import is_valid
from app.errors import EmptyEvaluation, MolDiffusionError
from app.metrics.fingerprint import DEFAULT_RADIUS, DEFAULT_WIDTH, morgan_fingerprint, tanimoto
from app.models import EvalRecord, EvalReport

logger = logging.getLogger(__name__)

# Instruction-length buckets in tokens: [lower, upper)
LENGTH_BUCKETS: Tuple[Tuple[int, Optional[int]], ...] = ((0, 16), (16, 32), (32, 64), (64, 128), (128, None))


def _bucket_label(length: int) -> str:
    for lower, upper in LENGTH_BUCKETS:
        if upper is None:
            return f"{lower}+"
        if lower <= length < upper:
            return f"{lower}-{upper - 1}"
    return f"{LENGTH_BUCKETS[-1][0]}+"


def _smiles_or_empty(g: Optional[MolGraph]) -> str:
    if g is None:
        return ""
    try:
        return write_smiles(g)
    except MolDiffusionError:
        return ""


def evaluate(
    pairs: Sequence[Tuple[Optional[MolGraph], MolGraph]],
    instruction_lengths: Optional[Sequence[int]] = None,
    radius: int = DEFAULT_RADIUS,
    width: int = DEFAULT_WIDTH,
) -> EvalReport:
    """
    Score generations against references.

    Args:
        pairs: (generated graph or None for a parse failure, reference graph)
        instruction_lengths: Optional token counts for per-length FTS buckets
        radius: Fingerprint radius
        width: Fingerprint width

    Returns:
        EvalReport; invalid generations score 0 similarity

    Raises:
        EmptyEvaluation: If pairs is empty
    """
    if not pairs:
        raise EmptyEvaluation("Nothing to evaluate")
    records: List[EvalRecord] = []
    for position, (generated, reference) in enumerate(pairs):
        valid = generated is not None and is_valid(generated)[0]
        exact = valid and exact_match(generated, reference)
        fts = 0.0
        if valid:
            fts = 1.0 if exact else tanimoto(
                morgan_fingerprint(generated, radius, width), morgan_fingerprint(reference, radius, width)
            )
        records.append(
            EvalRecord(
                reference_smiles=_smiles_or_empty(reference),
                generated_smiles=_smiles_or_empty(generated) or None,
                valid=valid,
                exact=exact,
                morgan_fts=fts,
                instruction_length=instruction_lengths[position] if instruction_lengths is not None else None,
            )
        )

    n = len(records)
    buckets: Dict[str, List[float]] = {}
    for record in records:
        if record.instruction_length is not None:
            buckets.setdefault(_bucket_label(record.instruction_length), []).append(record.morgan_fts)

    report = EvalReport(
        n_total=n,
        valid_fraction=sum(r.valid for r in records) / n,
        exact_fraction=sum(r.exact for r in records) / n,
        morgan_fts_mean=float(np.mean([r.morgan_fts for r in records])),
        records=records,
        fts_by_length={label: float(np.mean(values)) for label, values in sorted(buckets.items())},
    )
    logger.info(
        f"Evaluated {n} molecules: valid {report.valid_fraction:.3f}, "
        f"exact {report.exact_fraction:.3f}, Morgan FTS {report.morgan_fts_mean:.3f}"
    )
    return report


def parse_generated(line: str) -> Optional[MolGraph]:
    """Parse one generated SMILES line; empty or unparseable lines give None."""
    text = line.strip()
    if not text:
        return None
    try:
        return parse_smiles(text)
    except MolDiffusionError as e:
        logger.debug(f"Unparseable generation '{text}': {e}")
        return None


def evaluate_smiles(
    generated: Sequence[str],
    references: Sequence[str],
    instruction_lengths: Optional[Sequence[int]] = None,
    **kwargs,
) -> EvalReport:
    """Evaluate parallel lists of SMILES strings; references must parse."""
    if len(generated) != len(references):
        raise ValueError(f"{len(generated)} generated lines for {len(references)} references")
    pairs = [(parse_generated(g), parse_smiles(r.strip())) for g, r in zip(generated, references)]
    report = evaluate(pairs, instruction_lengths, **kwargs)
    for record, text in zip(report.records, generated):
        record.generated_smiles = text.strip() or None
    return report


def summarize_seeds(reports: Sequence[EvalReport]) -> Dict[str, Dict[str, float]]:
    """Mean and population standard deviation of each headline metric across reports."""
    if not reports:
        raise EmptyEvaluation("No reports to summarize")
    summary: Dict[str, Dict[str, float]] = {}
    for metric in ("valid_fraction", "exact_fraction", "morgan_fts_mean"):
        values = np.array([getattr(r, metric) for r in reports], dtype=np.float64)
        summary[metric] = {"mean": float(values.mean()), "std": float(values.std())}
    return summary


def write_report(report: EvalReport, path: Union[str, Path], extra: Optional[Dict] = None) -> Path:
    """Write the JSON report and the per-instance CSV next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_records_csv(report, path.with_suffix(".csv"))
    logger.info(f"Report written to {path}")
    return path


def write_records_csv(report: EvalReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    columns = ["reference_smiles", "generated_smiles", "valid", "exact", "morgan_fts", "instruction_length"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for record in report.records:
            writer.writerow(record.to_dict())
    return path
