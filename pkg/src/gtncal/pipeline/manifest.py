"""Run manifest: content-addressed artifact registry for pipeline stages."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ArtifactError

MANIFEST_NAME = "manifest.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH makes manifests byte-reproducible when required.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class RunManifest:
    root: Path
    config_hash: str
    artifacts: dict[str, dict] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)

    @classmethod
    def create(cls, root: str | Path, config_hash: str) -> "RunManifest":
        return cls(root=Path(root), config_hash=config_hash)

    @classmethod
    def load(cls, root: str | Path) -> "RunManifest":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.exists():
            raise ArtifactError(f"no manifest at {path}")
        raw = json.loads(path.read_text())
        return cls(
            root=root,
            config_hash=raw["config_hash"],
            artifacts=raw["artifacts"],
            seeds=raw.get("seeds", {}),
        )

    def save(self) -> None:
        payload = {
            "config_hash": self.config_hash,
            "artifacts": self.artifacts,
            "seeds": self.seeds,
        }
        (self.root / MANIFEST_NAME).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n"
        )

    def add(self, name: str, path: str | Path, stage: str) -> None:
        path = Path(path)
        self.artifacts[name] = {
            "path": str(path.relative_to(self.root)),
            "sha256": sha256_file(path),
            "stage": stage,
            "recorded_at": _timestamp(),
        }

    def add_tree(self, name: str, directory: str | Path, stage: str) -> None:
        """Register every file under a directory as name/<relative path>."""
        directory = Path(directory)
        for f in sorted(directory.rglob("*")):
            if f.is_file():
                self.add(f"{name}/{f.relative_to(directory)}", f, stage)

    def path_of(self, name: str) -> Path:
        if name not in self.artifacts:
            raise ArtifactError(f"artifact {name!r} not in manifest")
        return self.root / self.artifacts[name]["path"]

    def verify(self, names: list[str] | None = None) -> None:
        """Check existence and content hash of the named artifacts (all by
        default); raises ArtifactError on the first mismatch."""
        for name in names if names is not None else sorted(self.artifacts):
            if name not in self.artifacts:
                raise ArtifactError(f"artifact {name!r} not in manifest")
            entry = self.artifacts[name]
            path = self.root / entry["path"]
            if not path.exists():
                raise ArtifactError(f"artifact {name!r} missing at {path}")
            actual = sha256_file(path)
            if actual != entry["sha256"]:
                raise ArtifactError(
                    f"artifact {name!r} hash mismatch: {actual} != {entry['sha256']}"
                )

    def verify_prefix(self, prefix: str) -> None:
        names = [n for n in self.artifacts if n == prefix or n.startswith(prefix + "/")]
        if not names:
            raise ArtifactError(f"no artifacts under {prefix!r}")
        self.verify(names)
