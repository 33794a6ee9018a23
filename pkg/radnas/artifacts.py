"""
Run manifests and artifact bookkeeping for the pipeline stages.

Each stage writes `runs/<stage>.json` (its RunManifest) and
`runs/<stage>.config.yaml` (the resolved config). Consumers look artifacts up
through the producing stage's manifest and verify their sha256.
"""

import json
import logging
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, Optional, Union

from pydantic import BaseModel, Field

from radnas import __version__
from radnas.exceptions import ArtifactHashError, ArtifactMissingError
from radnas.utils import atomic_write_text, sha256_file, sha256_text

logger = logging.getLogger(__name__)

RUNS_DIR = "runs"


class ArtifactRecord(BaseModel):
    path: str  # relative to the output root
    sha256: str


class RunManifest(BaseModel):
    command: str
    config_hash: str
    started_at: str
    finished_at: Optional[str] = None
    artifacts: Dict[str, ArtifactRecord] = Field(default_factory=dict)
    inputs: Dict[str, ArtifactRecord] = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def package_versions() -> Dict[str, str]:
    versions = {"radnas": __version__, "python": platform.python_version()}
    for name in ("torch", "numpy", "pydantic", "SQLAlchemy"):
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def manifest_path(out: Path, stage: str) -> Path:
    return Path(out) / RUNS_DIR / f"{stage}.json"


def config_copy_path(out: Path, stage: str) -> Path:
    return Path(out) / RUNS_DIR / f"{stage}.config.yaml"


def record(out: Path, path: Union[str, Path]) -> ArtifactRecord:
    path = Path(path)
    if not path.is_file():
        raise ArtifactMissingError(path, "stage finished without writing it")
    return ArtifactRecord(path=str(path.resolve().relative_to(Path(out).resolve())), sha256=sha256_file(path))


def write_run_manifest(out: Path, manifest: RunManifest, config_yaml: str) -> Path:
    """Config copy first, manifest last, both atomically; the manifest's config hash must match the copy."""
    copy = atomic_write_text(config_copy_path(out, manifest.command), config_yaml)
    manifest.finished_at = manifest.finished_at or utc_now()
    path = atomic_write_text(manifest_path(out, manifest.command), json.dumps(manifest.model_dump(), indent=2, sort_keys=True) + "\n")
    logger.info("[STORE] %s run manifest written (%d artifacts, config %s)", manifest.command, len(manifest.artifacts), copy.name)
    return path


def read_run_manifest(out: Path, stage: str) -> Optional[RunManifest]:
    path = manifest_path(out, stage)
    if not path.is_file():
        return None
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))


def verify(out: Path, rec: ArtifactRecord) -> Path:
    path = Path(out) / rec.path
    if not path.is_file():
        raise ArtifactMissingError(path, "recorded in a run manifest but no longer on disk")
    actual = sha256_file(path)
    if actual != rec.sha256:
        raise ArtifactHashError(path, rec.sha256, actual)
    return path


def require_artifact(out: Path, producer: str, name: str, expected: Path) -> ArtifactRecord:
    """The artifact `name` of stage `producer`, hash-checked; `expected` is the path named in errors."""
    manifest = read_run_manifest(out, producer)
    if manifest is None or name not in manifest.artifacts:
        raise ArtifactMissingError(expected, f"run `radnas {producer}` first")
    rec = manifest.artifacts[name]
    verify(out, rec)
    return rec


def completed_run(out: Path, stage: str, config_hash: str) -> Optional[RunManifest]:
    """The existing manifest when `stage` already ran with this config and its inputs and outputs are unchanged."""
    manifest = read_run_manifest(out, stage)
    if manifest is None or manifest.config_hash != config_hash or manifest.finished_at is None:
        return None
    try:
        for rec in (*manifest.artifacts.values(), *manifest.inputs.values()):
            verify(out, rec)
    except (ArtifactMissingError, ArtifactHashError) as e:
        logger.warning("[STORE] %s outputs changed since the last run, rerunning: %s", stage, e)
        return None
    return manifest


def context_key(*parts: str) -> str:
    return sha256_text("|".join(parts))[:32]


def status(state: str, artifacts: Dict[str, ArtifactRecord], message: str) -> dict:
    return {"status": state, "artifacts": {k: v.path for k, v in artifacts.items()}, "message": message}
