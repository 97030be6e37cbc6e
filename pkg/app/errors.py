"""
Exception hierarchy for the molecule diffusion system.
Every domain failure derives from MolDiffusionError and, where one fits,
from the builtin callers would naturally catch.
"""

from typing import Any, Dict, Optional


class MolDiffusionError(Exception):
    """Base class for all domain errors."""


class ConfigError(MolDiffusionError, ValueError):
    """Malformed or unknown configuration keys."""


# SMILES ---------------------------------------------------------------------


class SmilesError(MolDiffusionError, ValueError):
    """SMILES text could not be read; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}" + (f" in '{text}'" if text else ""))


class EmptyInput(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class UnbalancedParenthesis(SmilesError):
    pass


class DanglingRingClosure(SmilesError):
    pass


class MultipleFragments(SmilesError):
    pass


class UnexpectedCharacter(SmilesError):
    pass


# Graphs ---------------------------------------------------------------------


class InvalidGraph(MolDiffusionError, ValueError):
    """Graph construction would break symmetry or the empty diagonal."""


class DisconnectedGraph(MolDiffusionError, ValueError):
    """Operation needs a connected graph."""


# Vocabulary -----------------------------------------------------------------


class EmptyCorpus(MolDiffusionError, ValueError):
    pass


class UnknownToken(MolDiffusionError, KeyError):
    pass


class VocabularyFormatError(MolDiffusionError, ValueError):
    pass


class TargetTooLong(MolDiffusionError, ValueError):
    def __init__(self, size: int, slots: int):
        self.size = size
        self.slots = slots
        super().__init__(f"Molecule has {size} atoms but only {slots} target slots")


class ResidualMask(MolDiffusionError, ValueError):
    """Decoding was asked to read a graph that still holds [MASK] entries."""


class NoAtoms(MolDiffusionError, ValueError):
    """Every target slot decoded to [EMPTY]."""


# Diffusion ------------------------------------------------------------------


class StepOutOfRange(MolDiffusionError, ValueError):
    pass


class StrideTooLarge(MolDiffusionError, ValueError):
    pass


# Numerics -------------------------------------------------------------------


class ShapeMismatch(MolDiffusionError, ValueError):
    pass


class IndexOutOfRange(MolDiffusionError, IndexError):
    pass


class NotScalar(MolDiffusionError, ValueError):
    pass


# Training / checkpoints -----------------------------------------------------


class EmptyDataset(MolDiffusionError, ValueError):
    pass


class NonFiniteLoss(MolDiffusionError, ArithmeticError):
    def __init__(self, step: int, components: Optional[Dict[str, Any]] = None):
        self.step = step
        self.components = components or {}
        super().__init__(f"Non-finite loss at step {step}: {self.components}")


class CheckpointError(MolDiffusionError, ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionUnsupported(CheckpointError):
    pass


class DigestMismatch(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


class CorruptHeader(CheckpointError):
    pass


# Metrics --------------------------------------------------------------------


class WidthMismatch(MolDiffusionError, ValueError):
    pass


class EmptyEvaluation(MolDiffusionError, ValueError):
    """evaluate() was given no pairs."""
