"""
Run manifests: everything needed to reproduce an output directory.
"""

import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from app import __version__
from app.cli.config import RunConfig

logger = logging.getLogger(__name__)

MANIFEST_TEMPLATE = "manifest.{command}.json"


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    command: str,
    config: RunConfig,
    inputs: Iterable[Optional[Union[str, Path]]] = (),
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write manifest.<command>.json into the run's output directory.

    Args:
        command: Command name
        config: Fully resolved configuration
        inputs: Input files; missing or None entries are skipped
        extra: Additional command-specific fields

    Returns:
        Path of the manifest
    """
    out = config.output
    out.mkdir(parents=True, exist_ok=True)
    digests = {str(p): file_digest(p) for p in inputs if p is not None and Path(p).is_file()}
    manifest = {
        "command": command,
        "version": __version__,
        "seed": config.seed,
        "config": config.model_dump(),
        "inputs": digests,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = out / MANIFEST_TEMPLATE.format(command=command)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info(f"Manifest written to {path}")
    return path
