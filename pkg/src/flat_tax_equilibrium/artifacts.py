"""
Run manifests and artifact persistence.

Every JSON artifact carries a ``manifest_hash`` field and every CSV starts with
a ``# manifest_hash=<hex>`` comment line, so outputs can be traced back to the
manifest that produced them. JSON is written with sorted keys and a fixed
indent; the same manifest reproduces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from flat_tax_equilibrium.exceptions import ConfigError
from flat_tax_equilibrium.type_helpers import FrozenModel

logger = logging.getLogger(__name__)

__all__ = ["RunManifest", "ArtifactStore", "canonical_json", "to_jsonable"]

MANIFEST_FILE = "manifest.json"
_HASH_PREFIX = "# manifest_hash="


def to_jsonable(value: Any) -> Any:
    """Plain JSON types for numpy values, enums and models; non-finite floats become None."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return to_jsonable(value.value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def canonical_json(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=True)


class RunManifest(FrozenModel):
    """Everything that determines the outputs of one command run."""

    command: str
    config_path: str | None = None
    output_dir: str = "out"
    seed: int = 0
    overrides: list[tuple[str, str]] = Field(default_factory=list)
    version: str = "0.0.0"
    threads: int = Field(default=1, ge=1)
    args: dict[str, Any] = Field(default_factory=dict)

    def digest(self) -> str:
        """SHA-256 of the canonical manifest JSON."""
        return hashlib.sha256(canonical_json(self.model_dump(mode="json")).encode("utf-8")).hexdigest()


class ArtifactStore:
    """
    Reads and writes the artifacts of one output directory.

    Args:
        output_dir: Directory holding the artifacts; created if missing
        manifest: Manifest of the current run, or None for read-only use
    """

    def __init__(self, output_dir: str | Path, manifest: RunManifest | None = None):
        self.root = Path(output_dir)
        self.manifest = manifest
        self.manifest_hash = manifest.digest() if manifest is not None else None

    def path(self, name: str) -> Path:
        return self.root / name

    def _ensure_writable(self) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"Cannot create output directory {self.root}: {exc}") from exc
        if not os.access(self.root, os.W_OK):
            raise ConfigError(f"Output directory {self.root} is not writable")

    def _require_hash(self) -> str:
        if self.manifest_hash is None:
            raise ConfigError("This artifact store is read-only (no manifest)")
        return self.manifest_hash

    def write_manifest(self) -> Path:
        digest = self._require_hash()
        self._ensure_writable()
        payload = {**self.manifest.model_dump(mode="json"), "manifest_hash": digest}
        target = self.path(MANIFEST_FILE)
        target.write_text(canonical_json(payload) + "\n", encoding="utf-8")
        return target

    def write_json(self, name: str, payload: dict[str, Any]) -> Path:
        self._ensure_writable()
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        body = {**to_jsonable(payload), "manifest_hash": self._require_hash()}
        target.write_text(canonical_json(body) + "\n", encoding="utf-8")
        logger.info(f"Wrote {target}")
        return target

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        self._ensure_writable()
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", encoding="utf-8", newline="") as handle:
            handle.write(f"{_HASH_PREFIX}{self._require_hash()}\n")
            frame.to_csv(handle, index=False, lineterminator="\n", float_format="%.12g")
        logger.info(f"Wrote {target} ({len(frame)} rows)")
        return target

    def _existing(self, name: str) -> Path:
        target = self.path(name)
        if not target.is_file():
            raise ConfigError(f"Missing artifact {target}; run the command that produces it first")
        return target

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def read_json(self, name: str) -> dict[str, Any]:
        target = self._existing(name)
        try:
            return json.loads(target.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Artifact {target} is not valid JSON: {exc}") from exc

    def read_csv(self, name: str) -> pd.DataFrame:
        return pd.read_csv(self._existing(name), comment="#")

    def read_hash(self, name: str) -> str | None:
        """The manifest hash recorded in an artifact, if any."""
        target = self._existing(name)
        if target.suffix == ".json":
            return self.read_json(name).get("manifest_hash")
        with target.open(encoding="utf-8") as handle:
            first = handle.readline().strip()
        return first[len(_HASH_PREFIX) :] if first.startswith(_HASH_PREFIX) else None
