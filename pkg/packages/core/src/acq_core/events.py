"""
Training event system: structured events for the training loop and phase runner.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from acq_core.utils.logger import get_logger, warning


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class TrainingEvent:
    """A single training / pipeline event."""
    kind: str           # "iteration", "warmup_done", "epoch_done", "run_done", ...
    run_id: str
    ts: str = ""        # ISO 8601 UTC
    phase: str = ""     # "warmup" / "train" / pipeline phase name
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.ts:
            self.ts = _now_iso()


class EventEmitter:
    """In-memory event bus. Listener failures never break training."""

    def __init__(self):
        self._listeners: list[Callable[[TrainingEvent], None]] = []

    def on(self, listener: Callable[[TrainingEvent], None]) -> None:
        self._listeners.append(listener)

    def emit(self, event: TrainingEvent) -> None:
        for listener in self._listeners:
            try:
                listener(event)
            except Exception as e:
                warning(f"event listener failed on '{event.kind}': {e}")


class LogListener:
    """
    Console view of the event stream.

    训练事件按 run_id 打前缀；``iteration`` 每 ``every`` 步打印一行；
    runner 的 ``<phase>_start / _done / _failed`` 打成分隔块与结果行。
    """

    _MESSAGES = {
        "run_start": "run started",
        "run_done": "run completed",
        "warmup_done": "warm-up finished, activation bounds frozen",
    }

    def __init__(self, every: int = 50):
        self.every = max(1, every)

    def _iteration_line(self, event: TrainingEvent) -> Optional[str]:
        data = event.data
        t = data.get("t", 0)
        if t % self.every:
            return None
        parts = [f"t={t}", event.phase, f"G={data.get('total', float('nan')):.4f}"]
        if data.get("student_loss") is not None:
            parts.append(f"student={data['student_loss']:.4f}")
        parts.append(f"lr_g={data.get('lr_g', 0):.2e}")
        return " ".join(parts)

    def __call__(self, event: TrainingEvent) -> None:
        kind, data = event.kind, event.data
        if event.phase == "pipeline":
            self._pipeline(kind, data)
            return

        log = get_logger(event.run_id)
        if kind == "iteration":
            line = self._iteration_line(event)
            if line:
                log.info(line)
        elif kind == "epoch_done":
            log.info(f"epoch {data.get('epoch')} done: {data.get('message', '')}")
        elif kind in self._MESSAGES:
            detail = data.get("message")
            log.info(f"{self._MESSAGES[kind]}: {detail}" if detail else self._MESSAGES[kind])

    def _pipeline(self, kind: str, data: dict) -> None:
        phase, _, outcome = kind.rpartition("_")
        log = get_logger(phase)
        if outcome == "start":
            log.info("=" * 60)
            log.info(f"start ({data.get('reason', '')})")
        elif outcome == "done":
            log.success("succeeded")
        elif outcome == "failed":
            log.error(f"failed: {data.get('error', 'unknown error')}")


class JsonlListener:
    """
    Writes one JSON line per ``iteration`` event.

    Timestamps are left out so identical seeds produce identical files.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh: Optional[object] = open(self.path, "w", encoding="utf-8")

    def __call__(self, event: TrainingEvent) -> None:
        if event.kind != "iteration" or self._fh is None:
            return
        record = {"phase": event.phase, **event.data}
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
