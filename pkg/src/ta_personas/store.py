"""Versioned on-disk persistence.

Layout: runs/<run_id>/manifest.jsonl (header line + append-only entries)
and runs/<run_id>/artifacts/<kind>-<digest>.json. Artifacts are plain JSON
so they can be inspected and cited; digests are computed over the payload
alone, so identical analysis content yields identical digests across runs.
"""

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import jsonschema

from .errors import IoError, ManifestCorruption, SchemaError

SCHEMA_VERSION = 1

ARTIFACT_KINDS = (
    "corpus",
    "codebook",
    "themebook",
    "consistency_report",
    "decision",
    "persona",
    "trace_report",
)

_SCHEMAS = {
    "corpus": {
        "type": "object",
        "required": ["documents", "chunks", "policy", "tokenizer_backend"],
    },
    "codebook": {"type": "object", "required": ["dimension", "stage", "codes"]},
    "themebook": {
        "type": "object",
        "required": ["dimension", "stage", "themes", "temperature_used"],
    },
    "consistency_report": {"type": "object", "required": ["dimension", "rows", "k"]},
    "decision": {"type": "object", "required": ["dimension", "actions"]},
    "persona": {"type": "object", "required": ["raw_response", "source_selection"]},
    "trace_report": {"type": "object", "required": ["element_links", "unmatched_elements"]},
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def payload_digest(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ArtifactEnvelope:
    artifact_kind: str
    payload: dict
    provenance: dict = field(default_factory=dict)  # run_id, parents, entries
    schema_version: int = SCHEMA_VERSION

    @property
    def digest(self) -> str:
        return payload_digest(self.payload)

    def to_dict(self) -> dict:
        return {
            "artifact_kind": self.artifact_kind,
            "schema_version": self.schema_version,
            "digest": self.digest,
            "payload": self.payload,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArtifactEnvelope":
        return cls(
            artifact_kind=d["artifact_kind"],
            payload=d["payload"],
            provenance=d.get("provenance", {}),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
        )


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(f"cannot write {path}: {exc}") from exc


class RunManifest:
    """Append-only record of every model call and analyst decision.

    The first line of the backing file is a header (run_id, created_at,
    config snapshot); each further line is one sequence-numbered entry.
    """

    def __init__(self, path: Path, run_id: str, config: Optional[dict] = None):
        self.path = Path(path)
        self.run_id = run_id
        self._lock = threading.Lock()
        self.entries: List[dict] = []
        if self.path.exists():
            self._load()
        else:
            self.created_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            self.config = config or {}
            header = {
                "run_id": run_id,
                "created_at": self.created_at,
                "config": self.config,
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.write(canonical_json(header) + "\n")

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
        if not lines:
            raise ManifestCorruption(f"manifest {self.path} is empty")
        header = json.loads(lines[0])
        self.created_at = header["created_at"]
        self.config = header.get("config", {})
        if header["run_id"] != self.run_id:
            raise ManifestCorruption(
                f"manifest {self.path} belongs to run {header['run_id']}, "
                f"not {self.run_id}"
            )
        self.entries = [json.loads(line) for line in lines[1:]]
        for i, entry in enumerate(self.entries, 1):
            if entry.get("sequence") != i:
                raise ManifestCorruption(
                    f"manifest {self.path}: entry {i} has sequence "
                    f"{entry.get('sequence')}"
                )

    def append(self, entry: dict) -> dict:
        """Assigns the next sequence number unless the entry carries one;
        a pre-assigned sequence must be exactly previous max + 1."""
        with self._lock:
            expected = len(self.entries) + 1
            sequence = entry.get("sequence")
            if sequence is None:
                entry = dict(entry, sequence=expected)
            elif sequence != expected:
                raise ManifestCorruption(
                    f"sequence gap: expected {expected}, got {sequence}"
                )
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(canonical_json(entry) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.entries.append(entry)
            return entry


def append_manifest(manifest: RunManifest, entry: dict) -> RunManifest:
    manifest.append(entry)
    return manifest


class RunStore:
    """Artifacts and manifest for one run, rooted at runs_root/run_id."""

    def __init__(self, runs_root, run_id: str, config: Optional[dict] = None):
        self.runs_root = Path(runs_root)
        self.run_id = run_id
        self.run_dir = self.runs_root / run_id
        self.artifacts_dir = self.run_dir / "artifacts"
        self.manifest = RunManifest(self.run_dir / "manifest.jsonl", run_id, config)

    # -- artifacts ---------------------------------------------------------

    def artifact_path(self, kind: str, digest: str) -> Path:
        return self.artifacts_dir / f"{kind}-{digest}.json"

    def save_artifact(self, env: ArtifactEnvelope) -> str:
        if env.artifact_kind not in ARTIFACT_KINDS:
            raise SchemaError(f"unknown artifact kind: {env.artifact_kind}")
        try:
            jsonschema.validate(env.payload, _SCHEMAS[env.artifact_kind])
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"{env.artifact_kind} payload invalid: {exc.message}") from exc
        for parent in env.provenance.get("parents", []):
            if not self._digest_exists(parent):
                raise SchemaError(f"provenance: parent digest {parent} does not resolve")
        digest = env.digest
        path = self.artifact_path(env.artifact_kind, digest)
        if not path.exists():
            _atomic_write(path, json.dumps(env.to_dict(), indent=2, ensure_ascii=False))
        return digest

    def _digest_exists(self, digest: str) -> bool:
        if not self.artifacts_dir.is_dir():
            return False
        return any(
            p.stem.endswith(digest) for p in self.artifacts_dir.glob("*.json")
        )

    def load_artifact(self, kind: str, digest: str) -> ArtifactEnvelope:
        path = self.artifact_path(kind, digest)
        if not path.exists():
            raise IoError(f"artifact not found: {path}")
        env = ArtifactEnvelope.from_dict(json.loads(path.read_text("utf-8")))
        return env

    def list_artifacts(self) -> List[Tuple[str, str]]:
        """(kind, digest) pairs, sorted."""
        if not self.artifacts_dir.is_dir():
            return []
        out = []
        for path in sorted(self.artifacts_dir.glob("*.json")):
            kind, _, digest = path.stem.partition("-")
            out.append((kind, digest))
        return out

    def find_latest(self, kind: str, predicate=None) -> Optional[ArtifactEnvelope]:
        """Newest matching artifact by file mtime; predicate sees the payload."""
        if not self.artifacts_dir.is_dir():
            return None
        paths = sorted(
            self.artifacts_dir.glob(f"{kind}-*.json"),
            key=lambda p: p.stat().st_mtime,
        )
        for path in reversed(paths):
            env = ArtifactEnvelope.from_dict(json.loads(path.read_text("utf-8")))
            if predicate is None or predicate(env.payload):
                return env
        return None

    # -- pipeline state ----------------------------------------------------

    @property
    def state_path(self) -> Path:
        return self.run_dir / "state.json"

    def load_state(self) -> Dict[str, dict]:
        if self.state_path.exists():
            return json.loads(self.state_path.read_text("utf-8"))
        return {}

    def save_state(self, state: Dict[str, dict]) -> None:
        _atomic_write(self.state_path, json.dumps(state, indent=2))


def list_runs(runs_root) -> List[str]:
    root = Path(runs_root)
    if not root.is_dir():
        return []
    return sorted(
        p.name for p in root.iterdir() if (p / "manifest.jsonl").exists()
    )
