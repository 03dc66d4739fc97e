"""
PhaseRunner: 增量执行 phase 并维护 manifest

一个 phase 被跳过，当且仅当 manifest 里记录的 version 与 config fingerprint
（phase 配置 + seed + 上游产物 fingerprint）都没变、输入输出都在盘上、上次状态为 succeeded。
"""
import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from acq_core.events import TrainingEvent
from acq_core.fingerprints import hash_file, hash_json
from acq_core.utils.logger import get_logger
from acq_pipeline.manifest import JsonManifest, resolve_artifact_path
from acq_pipeline.phase import Phase
from acq_pipeline.types import Artifact, ErrorInfo, PhaseResult, ResolvedOutputs, RunContext, artifact_kind

log = get_logger("runner")


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def artifact_fingerprint(path: Path) -> str:
    """Archive 目录取 model.json 的 hash（其中含 blob digest），文件取内容 hash；不存在为空串。"""
    target = path / "model.json" if path.is_dir() else path
    return hash_file(target) if target.exists() else ""


class PhaseRunner:
    def __init__(self, manifest: JsonManifest, workspace: Path):
        self.manifest = manifest
        self.workspace = Path(workspace)

    def _path(self, key: str) -> Path:
        return resolve_artifact_path(key, self.workspace)

    def config_fingerprint(self, phase: Phase, ctx: RunContext) -> str:
        return hash_json({
            "config": ctx.phase_config(phase.name),
            "seed": ctx.seed,
            "inputs": {key: artifact_fingerprint(self._path(key)) for key in phase.requires()},
        })

    def should_run(self, phase: Phase, ctx: RunContext, *, force: bool = False) -> Tuple[bool, Optional[str]]:
        """
        Returns:
            (should_run, reason)；reason 会写进日志与 ``<phase>_start`` 事件
        """
        if force:
            return True, "forced"

        record = self.manifest.get_phase_data(phase.name)
        if record is None:
            return True, "not in manifest"
        if record.get("version") != phase.version:
            return True, f"version changed: {record.get('version')} -> {phase.version}"
        if record.get("config_fingerprint") != self.config_fingerprint(phase, ctx):
            return True, "config or inputs changed"

        for role, keys in (("required input", phase.requires()), ("output", phase.provides())):
            for key in keys:
                path = self._path(key)
                if not path.exists():
                    return True, f"{role} '{key}' not found: {path}"

        if record.get("status") != "succeeded":
            return True, f"status is {record.get('status')} (expected 'succeeded')"
        return False, "all checks passed"

    def resolve_inputs(self, phase: Phase) -> Dict[str, Artifact]:
        artifacts = {}
        for key in phase.requires():
            path = self._path(key)
            if not path.exists():
                raise FileNotFoundError(f"Phase '{phase.name}' requires '{key}' but {path} does not exist")
            artifacts[key] = Artifact(
                key=key,
                relpath=str(path.relative_to(self.workspace)),
                kind=artifact_kind(path),
                fingerprint=artifact_fingerprint(path),
            )
        return artifacts

    def allocate_outputs(self, phase: Phase) -> ResolvedOutputs:
        """只建父目录；archive 目录由 save_model 自己创建。"""
        paths = {}
        for key in phase.provides():
            path = self._path(key)
            path.parent.mkdir(parents=True, exist_ok=True)
            paths[key] = path
        return ResolvedOutputs(paths=paths)

    def _emit(self, ctx: RunContext, kind: str, **data) -> None:
        if ctx.emitter is not None:
            ctx.emitter.emit(TrainingEvent(kind=kind, run_id=ctx.job_id, phase="pipeline", data=data))

    def _record(self, phase: Phase, status: str, **fields) -> None:
        self.manifest.update_phase(phase.name, version=phase.version, status=status, **fields)
        self.manifest.save()

    def _check_outputs(self, phase: Phase, result: PhaseResult, outputs: ResolvedOutputs) -> None:
        for key in result.outputs:
            if key not in outputs.paths:
                raise ValueError(
                    f"Phase '{phase.name}' declared output '{key}' which is not in phase.provides() / allocated outputs"
                )
            if not outputs.paths[key].exists():
                raise FileNotFoundError(
                    f"Phase '{phase.name}' did not write output: {outputs.paths[key]} (artifact key: {key})"
                )

    def run_phase(self, phase: Phase, ctx: RunContext, *, force: bool = False) -> Tuple[bool, Optional[str]]:
        """
        运行单个 phase；phase 抛出的异常不会逃出 runner，而是记成 failed。

        Returns:
            (是否成功, 错误信息)
        """
        should_run, reason = self.should_run(phase, ctx, force=force)
        if not should_run:
            log.info(f"{phase.name}: up to date, skipped")
            self._emit(ctx, f"{phase.name}_skipped", reason=reason)
            self._record(phase, "succeeded", finished_at=_now_iso(), skipped=True)
            return True, None

        self._emit(ctx, f"{phase.name}_start", reason=reason)
        fingerprint = self.config_fingerprint(phase, ctx)
        self._record(
            phase,
            "running",
            started_at=_now_iso(),
            requires=phase.requires(),
            provides=phase.provides(),
            skipped=False,
        )

        try:
            inputs = self.resolve_inputs(phase)
            outputs = self.allocate_outputs(phase)
            log.info(f"running '{phase.name}' ({reason})")
            result = phase.run(ctx, inputs, outputs)
            if result.status == "succeeded":
                self._check_outputs(phase, result, outputs)
        except Exception as e:
            log.error(f"phase '{phase.name}' raised {type(e).__name__}: {e}")
            result = PhaseResult(status="failed", error=ErrorInfo.from_exception(e, traceback.format_exc()))

        if result.status == "succeeded":
            self._record(
                phase,
                "succeeded",
                finished_at=_now_iso(),
                config_fingerprint=fingerprint,
                metrics=result.metrics,
                warnings=result.warnings,
            )
            self._emit(ctx, f"{phase.name}_done")
            return True, None

        message = result.error.message if result.error else "unknown error"
        self._record(phase, "failed", finished_at=_now_iso(), error=result.error, warnings=result.warnings)
        self._emit(ctx, f"{phase.name}_failed", error=message)
        return False, message

    def run_pipeline(
        self,
        phases: Sequence[Phase],
        ctx: RunContext,
        *,
        from_phase: Optional[str] = None,
        to_phase: Optional[str] = None,
        force: bool = False,
    ) -> List[str]:
        """
        依次运行 phases；``from_phase`` 及其之后的 phase 强制重跑，``to_phase`` 之后停止。

        Returns:
            成功（含跳过）的 phase 名列表；遇到失败即停止并抛出 RuntimeError。
        """
        names = [p.name for p in phases]
        for name in (from_phase, to_phase):
            if name is not None and name not in names:
                raise ValueError(f"unknown phase {name!r}; known: {', '.join(names)}")
        start = names.index(from_phase) if from_phase else 0
        stop = names.index(to_phase) if to_phase else len(names) - 1
        if start > stop:
            raise ValueError(f"--from ({from_phase}) must not come after --to ({to_phase})")

        done = []
        for i, phase in enumerate(phases[: stop + 1]):
            ok, err = self.run_phase(phase, ctx, force=force or (from_phase is not None and i >= start))
            if not ok:
                raise RuntimeError(f"phase '{phase.name}' failed: {err}")
            done.append(phase.name)
        return done
