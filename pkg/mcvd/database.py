# mcvd/database.py

import os
import json
import math
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from mcvd.exceptions import ArtifactError
from mcvd.schema.experimentSchema import RunManifest

MCVD_OUT_DIR = os.environ.get("MCVD_OUT_DIR", "results")

MANIFEST_NAME = "manifest.json"

logger = logging.getLogger(__name__)


def json_safe(value: Any) -> Any:
    """Non-finite floats become strings ("inf", "-inf", "nan") so the JSON stays strict."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    return value


def checksum(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactStore:
    """One output directory per run; every write goes through a temp file and os.replace."""

    def __init__(self, root: str = None):
        self.root = Path(root or MCVD_OUT_DIR)
        self.outputs: Dict[str, str] = {}

    def open(self) -> "ArtifactStore":
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactError(f"cannot create output directory {self.root}: {exc}") from exc
        if not os.access(self.root, os.W_OK):
            raise ArtifactError(f"output directory {self.root} is not writable")
        return self

    def _replace(self, tmp: Path, target: Path) -> None:
        try:
            os.replace(tmp, target)
        finally:
            if tmp.exists():
                tmp.unlink()

    def write_csv(self, name: str, frame: pd.DataFrame) -> str:
        target = self.root / name
        tmp = target.with_suffix(target.suffix + f".tmp.{os.getpid()}")
        try:
            frame.to_csv(tmp, index=False, float_format="%.17g", lineterminator="\n")
            self._replace(tmp, target)
        except OSError as exc:
            raise ArtifactError(f"failed to write {target}: {exc}") from exc
        self.outputs[name] = checksum(target)
        logger.info("wrote %s (%d rows)", target, len(frame))
        return self.outputs[name]

    def write_manifest(self, manifest: RunManifest) -> Path:
        target = self.root / MANIFEST_NAME
        tmp = target.with_suffix(".json.tmp")
        payload = json_safe(manifest.model_dump())
        try:
            tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            self._replace(tmp, target)
        except OSError as exc:
            raise ArtifactError(f"failed to write {target}: {exc}") from exc
        logger.info("wrote %s", target)
        return target


def read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc


def read_manifest(path) -> RunManifest:
    try:
        return RunManifest(**json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read manifest {path}: {exc}") from exc
