"""
JsonManifest: workspace-local phase status tracker (``manifest.json``).

Artifact paths are computed via resolve_artifact_path, never stored.
"""
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

from acq_pipeline.types import ErrorInfo, Status

MANIFEST_NAME = "manifest.json"

_PATH_MAP = {
    "pretrain": {
        "model": "teacher",
        "data": "data.json",
    },
    "quantize": {
        "student": "student",
        "generator": "generator",
        "report": "report.json",
        "metrics": "metrics.jsonl",
    },
    "audit": {
        "report": "audit.json",
    },
}


def resolve_artifact_path(key: str, workspace: Path) -> Path:
    """
    根据 artifact key 解析最终路径。

    未登记的 key 落到 ``<domain>/<obj>``。
    """
    parts = key.split(".", 1)
    if len(parts) == 2:
        domain, obj = parts
    else:
        domain, obj = "misc", key
    template = _PATH_MAP.get(domain, {}).get(obj, f"{domain}/{obj}")
    return Path(workspace) / template


class JsonManifest:
    """Phase records keyed by name, persisted as sorted JSON in the workspace."""

    def __init__(self, workspace: Path):
        self.workspace = Path(workspace)
        self.path = self.workspace / MANIFEST_NAME
        self.data: Dict[str, Any] = {"phases": {}}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                self.data = json.load(f)
            self.data.setdefault("phases", {})

    def save(self) -> None:
        self.workspace.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self.data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        tmp.replace(self.path)

    def get_phase_data(self, phase_name: str) -> Optional[Dict[str, Any]]:
        return self.data["phases"].get(phase_name)

    def update_phase(
        self,
        phase_name: str,
        *,
        version: str,
        status: Status,
        started_at: Optional[str] = None,
        finished_at: Optional[str] = None,
        requires: Optional[List[str]] = None,
        provides: Optional[List[str]] = None,
        config_fingerprint: Optional[str] = None,
        metrics: Optional[Dict[str, Any]] = None,
        warnings: Optional[List[str]] = None,
        error: Optional[ErrorInfo] = None,
        skipped: Optional[bool] = None,
    ) -> None:
        record = self.data["phases"].setdefault(phase_name, {"name": phase_name})
        record["version"] = version
        record["status"] = status
        optional = {
            "started_at": started_at,
            "finished_at": finished_at,
            "requires": requires,
            "provides": provides,
            "config_fingerprint": config_fingerprint,
            "metrics": metrics,
            "warnings": warnings,
            "skipped": skipped,
        }
        for key, value in optional.items():
            if value is not None:
                record[key] = value
        if status == "running":
            record.pop("error", None)
        if error is not None:
            record["error"] = asdict(error)
