"""
Binary checkpoint container.

Layout:
    8-byte magic b"MGDCKPT\\x00"
    u32 little-endian format version
    u64 little-endian header length, then the UTF-8 JSON header
    raw little-endian float64 arrays at the offsets listed in the header
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from app.core.denoiser import Denoiser, DenoiserConfig
from app.errors import BadMagic, CorruptHeader, DigestMismatch, TruncatedFile, VersionUnsupported
from app.numerics import AdamW, AdamWState

logger = logging.getLogger(__name__)

MAGIC = b"MGDCKPT\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DTYPE = np.dtype("<f8")


@dataclass
class TrainState:
    """Loop position at an optimizer-step boundary."""
    step: int = 0
    epoch: int = 0
    cursor: int = 0
    order: Optional[List[int]] = None
    rng_state: Optional[Dict[str, Any]] = None
    trace: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "epoch": self.epoch,
            "cursor": self.cursor,
            "order": self.order,
            "rng_state": self.rng_state,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "TrainState":
        return cls(**payload)


@dataclass
class Checkpoint:
    version: int
    config: DenoiserConfig
    vocab_digest: str
    arrays: Dict[str, np.ndarray]
    optimizer: AdamWState
    optimizer_settings: Dict[str, Any]
    train_state: TrainState

    def build_model(self) -> Denoiser:
        return Denoiser(self.config, arrays=self.arrays)


def save_checkpoint(
    path: Union[str, Path],
    model: Denoiser,
    optimizer: Optional[AdamW],
    vocab_digest: str,
    train_state: Optional[TrainState] = None,
) -> Path:
    """
    Write model, optimizer and loop state to one file.

    Args:
        path: Destination
        model: Denoiser whose parameters are stored
        optimizer: Optimizer whose moments are stored (None stores fresh moments)
        vocab_digest: Digest of the vocabulary the model was trained with
        train_state: Loop position; defaults to an empty state

    Returns:
        The written path
    """
    path = Path(path)
    arrays = model.arrays()
    state = optimizer.state if optimizer is not None else AdamWState.zeros_like(arrays)
    settings = (
        {"lr": optimizer.lr, "betas": list(optimizer.betas), "eps": optimizer.eps, "weight_decay": optimizer.weight_decay}
        if optimizer is not None
        else {}
    )

    blobs: List[bytes] = []
    directory: List[Dict[str, Any]] = []
    offset = 0
    sections = (("param", arrays), ("exp_avg", state.exp_avg), ("exp_avg_sq", state.exp_avg_sq))
    for section, named in sections:
        for name in sorted(named):
            blob = np.ascontiguousarray(named[name], dtype=_DTYPE).tobytes()
            directory.append({"section": section, "name": name, "shape": list(named[name].shape), "offset": offset})
            blobs.append(blob)
            offset += len(blob)

    header = {
        "config": model.config.model_dump(),
        "vocab_digest": vocab_digest,
        "tensors": directory,
        "data_length": offset,
        "optimizer": {"step": state.step, "settings": settings},
        "train_state": (train_state or TrainState()).to_dict(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)
    logger.info(f"Checkpoint written to {path} (step {state.step}, {offset} data bytes)")
    return path


def load_checkpoint(path: Union[str, Path], expected_digest: Optional[str] = None) -> Checkpoint:
    """
    Read a checkpoint.

    Args:
        path: Checkpoint file
        expected_digest: If given, must equal the stored vocabulary digest

    Raises:
        BadMagic, VersionUnsupported, TruncatedFile, CorruptHeader, DigestMismatch
    """
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        if not MAGIC.startswith(raw[: len(MAGIC)]):
            raise BadMagic(f"{path} is not a checkpoint file")
        raise TruncatedFile(f"{path}: {len(raw)} bytes is shorter than the fixed prefix")
    magic, version, header_length = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path} is not a checkpoint file")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: format version {version}, expected {FORMAT_VERSION}")

    data_start = _PREFIX.size + header_length
    if len(raw) < data_start:
        raise TruncatedFile(f"{path}: header runs past end of file")
    try:
        header = json.loads(raw[_PREFIX.size:data_start].decode("utf-8"))
        data_length = int(header["data_length"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
        raise CorruptHeader(f"{path}: unreadable checkpoint header ({e})") from e
    if len(raw) < data_start + data_length:
        raise TruncatedFile(f"{path}: expected {data_length} data bytes, found {len(raw) - data_start}")

    if expected_digest is not None and header["vocab_digest"] != expected_digest:
        raise DigestMismatch(
            f"{path} was trained with vocabulary {header['vocab_digest'][:12]}, "
            f"current vocabulary is {expected_digest[:12]}"
        )

    sections: Dict[str, Dict[str, np.ndarray]] = {"param": {}, "exp_avg": {}, "exp_avg_sq": {}}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = data_start + entry["offset"]
        values = np.frombuffer(raw, dtype=_DTYPE, count=count, offset=start)
        sections[entry["section"]][entry["name"]] = values.reshape(shape).astype(np.float64)

    optimizer = AdamWState(
        step=header["optimizer"]["step"],
        exp_avg=sections["exp_avg"],
        exp_avg_sq=sections["exp_avg_sq"],
    )
    return Checkpoint(
        version=version,
        config=DenoiserConfig(**header["config"]),
        vocab_digest=header["vocab_digest"],
        arrays=sections["param"],
        optimizer=optimizer,
        optimizer_settings=header["optimizer"]["settings"],
        train_state=TrainState.from_dict(header["train_state"]),
    )
