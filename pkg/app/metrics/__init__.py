"""
Evaluation metrics: circular fingerprints, Tanimoto similarity and reports.
"""

from app.metrics.fingerprint import Fingerprint, fnv1a64, morgan_fingerprint, tanimoto
from app.metrics.evaluate import evaluate, evaluate_smiles, summarize_seeds, write_report

__all__ = [
    "Fingerprint",
    "evaluate",
    "evaluate_smiles",
    "fnv1a64",
    "morgan_fingerprint",
    "summarize_seeds",
    "tanimoto",
    "write_report",
]
