"""Run manifest: stage bookkeeping with artifact hashing.

One JSON file per run directory records, per completed stage, the seed it
used, the hash of the run configuration, its artifact paths with sha256
digests, and wall time. A stage is considered done only if its recorded
hash matches the current configuration and every artifact re-hashes to its
recorded digest, so stale or hand-edited outputs trigger a re-run instead
of being trusted.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .validation import require

__all__ = [
    "MANIFEST_VERSION",
    "config_hash",
    "file_sha256",
    "RunManifest",
]

MANIFEST_VERSION = 1


def config_hash(config: dict, seed: int) -> str:
    """sha256 of the canonical (sorted-keys, compact) config plus the seed."""
    canon = json.dumps({"config": config, "seed": seed},
                       sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Mutable view over the manifest JSON for one run directory."""

    def __init__(self, run_dir, tool_version: str):
        self.run_dir = Path(run_dir)
        self.path = self.run_dir / "manifest.json"
        self.data = {
            "version": MANIFEST_VERSION,
            "tool_version": tool_version,
            "stages": {},
        }

    @classmethod
    def load_or_create(cls, run_dir, tool_version: str, path=None) -> "RunManifest":
        m = cls(run_dir, tool_version)
        if path is not None:
            m.path = Path(path)
        if m.path.exists():
            loaded = json.loads(m.path.read_text())
            require(loaded.get("version") == MANIFEST_VERSION,
                    f"manifest version {loaded.get('version')} unsupported")
            m.data = loaded
        return m

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def stage_done(self, name: str, chash: str) -> bool:
        """True if the stage ran under this config and its artifacts verify."""
        rec = self.data["stages"].get(name)
        if rec is None or rec.get("config_hash") != chash:
            return False
        for rel, digest in rec.get("artifacts", {}).items():
            p = self.run_dir / rel
            if not p.exists() or file_sha256(p) != digest:
                return False
        return True

    def record_stage(self, name: str, chash: str, seed: int,
                     artifact_paths: list, elapsed_s: float,
                     extra: dict | None = None) -> None:
        artifacts = {}
        for p in artifact_paths:
            p = Path(p)
            rel = str(p.relative_to(self.run_dir))
            artifacts[rel] = file_sha256(p)
        rec = {
            "config_hash": chash,
            "seed": seed,
            "artifacts": artifacts,
            "elapsed_s": round(elapsed_s, 3),
        }
        if extra:
            rec["extra"] = extra
        self.data["stages"][name] = rec
        self.save()

    def artifact(self, stage: str, suffix: str) -> Path:
        """Path of the unique recorded artifact ending in `suffix`."""
        rec = self.data["stages"].get(stage)
        if rec is None:
            raise FileNotFoundError(f"stage '{stage}' has not run; run it first")
        hits = [rel for rel in rec["artifacts"] if rel.endswith(suffix)]
        if len(hits) != 1:
            raise FileNotFoundError(
                f"stage '{stage}' has {len(hits)} artifacts matching '{suffix}'")
        p = self.run_dir / hits[0]
        if not p.exists() or file_sha256(p) != rec["artifacts"][hits[0]]:
            raise FileNotFoundError(
                f"artifact {hits[0]} is missing or modified; re-run stage '{stage}'")
        return p

    def artifacts_of(self, stage: str, suffix: str = "") -> list[Path]:
        """All recorded artifacts of a stage (verified), sorted by path."""
        rec = self.data["stages"].get(stage)
        if rec is None:
            raise FileNotFoundError(f"stage '{stage}' has not run; run it first")
        out = []
        for rel in sorted(rec["artifacts"]):
            if not rel.endswith(suffix):
                continue
            p = self.run_dir / rel
            if not p.exists() or file_sha256(p) != rec["artifacts"][rel]:
                raise FileNotFoundError(
                    f"artifact {rel} is missing or modified; re-run stage '{stage}'")
            out.append(p)
        return out
