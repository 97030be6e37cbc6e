"""
Data models shared across the system.
Defines bond and segment enumerations, dataset records, evaluation records
and training trace events.
"""

from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
from datetime import datetime, timezone


class BondKind(str, Enum):
    """Edge categories of a molecular graph, in edge-index order."""
    NONE = "none"
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def order(self) -> float:
        """Numeric bond order used by the valence rule."""
        return _BOND_ORDERS[self]

    @property
    def index(self) -> int:
        """Edge category index; [MASK] takes the next free index."""
        return _BOND_INDEX[self]

    @classmethod
    def from_index(cls, index: int) -> "BondKind":
        return _BONDS_BY_INDEX[index]


_BONDS_BY_INDEX: List[BondKind] = list(BondKind)
_BOND_INDEX: Dict[BondKind, int] = {kind: i for i, kind in enumerate(_BONDS_BY_INDEX)}
_BOND_ORDERS: Dict[BondKind, float] = {
    BondKind.NONE: 0.0,
    BondKind.SINGLE: 1.0,
    BondKind.DOUBLE: 2.0,
    BondKind.TRIPLE: 3.0,
    BondKind.AROMATIC: 1.5,
}

# Edge index space: five content categories followed by the absorbing state.
NUM_BOND_KINDS = len(_BONDS_BY_INDEX)
EDGE_MASK_INDEX = NUM_BOND_KINDS
EDGE_VOCAB_SIZE = NUM_BOND_KINDS + 1


class SegmentTag(int, Enum):
    """Segment of a position in the unified token sequence."""
    TEXT = 0
    SOURCE_GRAPH = 1
    TARGET_GRAPH = 2


class TraceKind(str, Enum):
    """Kinds of records written to the training metrics trace."""
    LOSS = "loss"
    EVAL = "eval"
    CHECKPOINT = "checkpoint"


@dataclass
class DatasetRecord:
    """One instruction/molecule pair read from a dataset file."""
    record_id: str
    description: str
    smiles: str
    source_smiles: Optional[str] = None

    @property
    def is_editing(self) -> bool:
        return self.source_smiles is not None


@dataclass
class EvalRecord:
    """Per-instance evaluation outcome."""
    reference_smiles: str
    generated_smiles: Optional[str]
    valid: bool
    exact: bool
    morgan_fts: float
    instruction_length: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reference_smiles": self.reference_smiles,
            "generated_smiles": self.generated_smiles or "",
            "valid": self.valid,
            "exact": self.exact,
            "morgan_fts": self.morgan_fts,
            "instruction_length": self.instruction_length,
        }


@dataclass
class EvalReport:
    """Aggregate evaluation of generated molecules against references."""
    n_total: int
    valid_fraction: float
    exact_fraction: float
    morgan_fts_mean: float
    records: List[EvalRecord] = field(default_factory=list)
    fts_by_length: Dict[str, float] = field(default_factory=dict)
    # Reserved for fingerprint families and distribution metrics not computed here.
    maccs_fts: Optional[float] = None
    rdk_fts: Optional[float] = None
    fcd: Optional[float] = None
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def to_dict(self, include_records: bool = False) -> Dict[str, Any]:
        """Convert report to dictionary for serialization."""
        payload: Dict[str, Any] = {
            "n_total": self.n_total,
            "valid_fraction": self.valid_fraction,
            "exact_fraction": self.exact_fraction,
            "morgan_fts_mean": self.morgan_fts_mean,
            "maccs_fts": self.maccs_fts,
            "rdk_fts": self.rdk_fts,
            "fcd": self.fcd,
            "fts_by_length": dict(self.fts_by_length),
            "created_at": self.created_at.isoformat(),
        }
        if include_records:
            payload["records"] = [record.to_dict() for record in self.records]
        return payload


@dataclass
class TraceEvent:
    """A single line of the JSONL metrics trace."""
    kind: TraceKind
    step: int
    data: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "step": self.step, **self.data}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "TraceEvent":
        data = {k: v for k, v in payload.items() if k not in ("kind", "step")}
        return cls(TraceKind(payload["kind"]), int(payload["step"]), data)
