"""Run manifest: what a command was asked to do and checksums of what it wrote."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from utils.experiment_presets import ARTIFACT_NAMES

PathLike = Union[str, Path]


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """Config echo, input/output paths and artifact checksums of one command.

    The only artifact of a run whose bytes change between identical reruns,
    since it carries wall-clock stamps.
    """

    command: str
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, Dict[str, str]] = field(default_factory=dict)
    runs: List[Dict[str, Any]] = field(default_factory=list)
    started_utc: str = field(default_factory=utc_now)
    finished_utc: Optional[str] = None
    status: str = "running"
    exit_code: Optional[int] = None

    def add_input(self, name: str, path: PathLike) -> None:
        self.inputs[name] = str(path)

    def add_output(self, name: str, path: PathLike) -> None:
        """Record a file, or every file below a directory, with its sha256."""
        target = Path(path)
        if target.is_dir():
            for item in sorted(p for p in target.rglob("*") if p.is_file()):
                self.outputs[f"{name}/{item.relative_to(target).as_posix()}"] = {
                    "path": str(item),
                    "sha256": sha256_file(item),
                }
            return
        self.outputs[name] = {"path": str(target), "sha256": sha256_file(target)}

    def verify(self) -> List[str]:
        """Names of outputs whose file no longer matches the recorded checksum."""
        return [
            name
            for name, entry in self.outputs.items()
            if not Path(entry["path"]).is_file() or sha256_file(entry["path"]) != entry["sha256"]
        ]

    def finish(self, exit_code: int) -> None:
        self.exit_code = exit_code
        self.status = "ok" if exit_code == 0 else "failed"
        self.finished_utc = utc_now()

    def write(self, run_dir: PathLike) -> Path:
        """Atomically write ``manifest.json`` into ``run_dir``."""
        target = Path(run_dir) / ARTIFACT_NAMES["manifest"]
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str))
        os.replace(tmp, target)
        return target

    @classmethod
    def read(cls, path: PathLike) -> "RunManifest":
        target = Path(path)
        if target.is_dir():
            target = target / ARTIFACT_NAMES["manifest"]
        return cls(**json.loads(target.read_text()))
