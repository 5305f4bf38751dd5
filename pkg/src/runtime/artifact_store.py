"""On-disk artifacts, one directory per stage.

Every write goes to a temp file in the target directory and is moved into
place with `os.replace`, so a reader never sees a half-written artifact.
Nothing written here carries a timestamp.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

from src.core.errors import MissingUpstreamError

MANIFEST = 'manifest.json'


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + '\n'


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class ArtifactStore:
    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    def stage_dir(self, stage: str) -> Path:
        return self.root / stage

    def path(self, stage: str, name: str) -> Path:
        return self.stage_dir(stage) / name

    def write_bytes(self, stage: str, name: str, data: bytes) -> Path:
        target = self.path(stage, name)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f'.{target.name}.', suffix='.tmp')
        try:
            with os.fdopen(fd, 'wb') as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return target

    def write_text(self, stage: str, name: str, text: str) -> Path:
        return self.write_bytes(stage, name, text.encode('utf-8'))

    def write_json(self, stage: str, name: str, payload: Any) -> Path:
        return self.write_text(stage, name, canonical_json(payload))

    def require(self, stage: str, upstream: str, name: str) -> Path:
        """Path of an upstream artifact; MissingUpstreamError when it was never produced."""
        target = self.path(upstream, name)
        if not target.is_file():
            raise MissingUpstreamError(stage, upstream, f'{upstream}/{name}')
        return target

    def read_json(self, stage: str, upstream: str, name: str) -> Any:
        return json.loads(self.require(stage, upstream, name).read_text(encoding='utf-8'))

    def _label(self, path: Path) -> str:
        try:
            return path.resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return str(path)

    def write_manifest(
        self,
        stage: str,
        *,
        config_hash: str,
        seeds: Mapping[str, int],
        inputs: Sequence[Path],
        outputs: Sequence[Path],
        extra: Mapping[str, Any] | None = None,
    ) -> Path:
        manifest = {
            'stage': stage,
            'config_hash': config_hash,
            'seeds': dict(seeds),
            'inputs': {self._label(p): file_digest(p) for p in inputs},
            'outputs': {self._label(p): file_digest(p) for p in outputs},
            **(extra or {}),
        }
        return self.write_json(stage, MANIFEST, manifest)

    def read_manifest(self, stage: str) -> dict[str, Any] | None:
        target = self.path(stage, MANIFEST)
        if not target.is_file():
            return None
        return json.loads(target.read_text(encoding='utf-8'))
