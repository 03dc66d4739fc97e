"""
Pipeline types shared by the runner and the phases.

artifact key 形如 ``<phase>.<name>``（``pretrain.model``、``quantize.report``）；
phase 只看到 workspace-relative 的 Artifact 与 runner 预分配的 ResolvedOutputs。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

Status = Literal["pending", "running", "succeeded", "failed", "skipped"]
ArtifactKind = Literal["archive", "json", "jsonl", "file"]


def artifact_kind(path: Path) -> ArtifactKind:
    """Model archives are directories; everything else goes by suffix."""
    if path.is_dir():
        return "archive"
    return {".json": "json", ".jsonl": "jsonl"}.get(path.suffix.lower(), "file")


@dataclass(frozen=True)
class Artifact:
    """
    An upstream product handed to a phase.

    fingerprint: archive 取 model.json 的 hash（已含 blob digest），文件取内容 hash。
    """

    key: str
    relpath: str
    kind: ArtifactKind = "file"
    fingerprint: str = ""

    @property
    def producer(self) -> str:
        return self.key.split(".", 1)[0]

    def path(self, workspace: str | Path) -> Path:
        return Path(workspace) / self.relpath


@dataclass
class ErrorInfo:
    type: str
    message: str
    traceback: Optional[str] = None

    @classmethod
    def from_exception(cls, exc: BaseException, traceback: Optional[str] = None) -> "ErrorInfo":
        return cls(type=type(exc).__name__, message=str(exc), traceback=traceback)


@dataclass
class PhaseResult:
    """outputs 必须是 phase.provides() 的子集，且每个都已落盘。"""

    status: Literal["succeeded", "failed"]
    outputs: List[str] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    error: Optional[ErrorInfo] = None


@dataclass
class RunContext:
    """
    One pipeline invocation.

    config = {"seed": int, "phases": {phase_name: {...}}}；seed 对所有 phase 生效，
    并参与每个 phase 的 config fingerprint。
    """
    job_id: str
    workspace: str
    config: Dict[str, Any]
    emitter: Any = None  # acq_core.events.EventEmitter

    @property
    def seed(self) -> int:
        return int(self.config.get("seed") or 0)

    @property
    def root(self) -> Path:
        return Path(self.workspace)

    def phase_config(self, name: str) -> Dict[str, Any]:
        """A copy of ``config["phases"][name]``; phases may pop from it freely."""
        return dict(self.config.get("phases", {}).get(name, {}))

    def input_path(self, inputs: Dict[str, Artifact], key: str) -> Path:
        if key not in inputs:
            raise KeyError(f"input {key!r} was not resolved for this phase; got {sorted(inputs)}")
        return inputs[key].path(self.workspace)


@dataclass(frozen=True)
class ResolvedOutputs:
    """artifact key → absolute path, allocated by the runner before ``Phase.run``."""
    paths: Dict[str, Path]

    def get(self, key: str) -> Path:
        if key not in self.paths:
            raise KeyError(f"Output path not allocated for artifact key: {key}")
        return self.paths[key]

    def for_phase(self, phase: str) -> Dict[str, Path]:
        """Paths keyed by the bare output name (``"student"`` for ``quantize.student``)."""
        prefix = f"{phase}."
        return {key[len(prefix):]: path for key, path in self.paths.items() if key.startswith(prefix)}
