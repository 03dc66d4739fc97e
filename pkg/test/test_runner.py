"""测试 PhaseRunner：跳过 / 重跑判定、fingerprint 传播、失败记录（假 phase，不训练）"""
import json
from pathlib import Path
from typing import Dict, List, Sequence

import pytest

from acq_pipeline.manifest import JsonManifest, resolve_artifact_path
from acq_pipeline.phase import Phase
from acq_pipeline.phases import ALL_PHASES, PHASE_NAMES
from acq_pipeline.processors._types import ProcessorResult
from acq_pipeline.runner import PhaseRunner
from acq_pipeline.types import Artifact, ErrorInfo, PhaseResult, ResolvedOutputs, RunContext, artifact_kind


class WritePhase(Phase):
    """Writes ``<value>`` to its single output; counts runs."""

    def __init__(self, name: str, provides: str, requires: Sequence[str] = (), version: str = "1"):
        self.name = name
        self.version = version
        self._provides = provides
        self._requires = list(requires)
        self.runs = 0

    def requires(self) -> List[str]:
        return self._requires

    def provides(self) -> List[str]:
        return [self._provides]

    def run(self, ctx: RunContext, inputs: Dict[str, Artifact], outputs: ResolvedOutputs) -> PhaseResult:
        self.runs += 1
        text = str(ctx.phase_config(self.name).get("value", 0))
        for art in inputs.values():
            text += "|" + art.path(ctx.workspace).read_text()
        outputs.get(self._provides).write_text(text)
        return PhaseResult(status="succeeded", outputs=[self._provides], metrics={"len": len(text)})


class FailingPhase(WritePhase):
    def run(self, ctx, inputs, outputs):
        self.runs += 1
        return PhaseResult(status="failed", error=ErrorInfo(type="ValueError", message="bad input"))


class RaisingPhase(WritePhase):
    def run(self, ctx, inputs, outputs):
        raise RuntimeError("boom")


def _ctx(workspace: Path, **phases) -> RunContext:
    return RunContext(job_id="t", workspace=str(workspace), config={"seed": 0, "phases": phases})


@pytest.fixture
def chain():
    return [WritePhase("first", "first.out"), WritePhase("second", "second.out", requires=["first.out"])]


def test_resolve_artifact_path(tmp_path):
    assert resolve_artifact_path("pretrain.model", tmp_path) == tmp_path / "teacher"
    assert resolve_artifact_path("quantize.report", tmp_path) == tmp_path / "report.json"
    assert resolve_artifact_path("demo.thing", tmp_path) == tmp_path / "demo" / "thing"
    assert resolve_artifact_path("loose", tmp_path) == tmp_path / "misc" / "loose"


def test_second_run_skips(tmp_path, chain):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    assert runner.run_pipeline(chain, _ctx(tmp_path)) == ["first", "second"]
    runner.run_pipeline(chain, _ctx(tmp_path))
    assert [p.runs for p in chain] == [1, 1]
    record = JsonManifest(tmp_path).get_phase_data("second")
    assert record["status"] == "succeeded" and record["skipped"] is True
    assert (tmp_path / "second" / "out").read_text() == "0|0"


def test_config_change_reruns_downstream(tmp_path, chain):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    runner.run_pipeline(chain, _ctx(tmp_path))
    runner.run_pipeline(chain, _ctx(tmp_path, first={"value": 7}))
    # second's input fingerprint changed with first's output
    assert [p.runs for p in chain] == [2, 2]
    assert (tmp_path / "second" / "out").read_text() == "0|7"


def test_seed_change_reruns(tmp_path, chain):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    runner.run_pipeline(chain, _ctx(tmp_path))
    ctx = _ctx(tmp_path)
    ctx.config["seed"] = 5
    runner.run_pipeline(chain, ctx)
    assert chain[0].runs == 2


def test_version_bump_and_missing_output_rerun(tmp_path, chain):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    runner.run_pipeline(chain, _ctx(tmp_path))
    chain[1].version = "2"
    ok, reason = runner.should_run(chain[1], _ctx(tmp_path))
    assert ok and "version changed" in reason
    (tmp_path / "first" / "out").unlink()
    ok, reason = runner.should_run(chain[0], _ctx(tmp_path))
    assert ok and "not found" in reason


def test_from_forces_and_to_stops(tmp_path, chain):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    assert runner.run_pipeline(chain, _ctx(tmp_path), to_phase="first") == ["first"]
    assert chain[1].runs == 0
    runner.run_pipeline(chain, _ctx(tmp_path))
    runner.run_pipeline(chain, _ctx(tmp_path), from_phase="second")
    assert [p.runs for p in chain] == [1, 2]
    with pytest.raises(ValueError, match="unknown phase"):
        runner.run_pipeline(chain, _ctx(tmp_path), from_phase="third")
    with pytest.raises(ValueError, match="must not come after"):
        runner.run_pipeline(chain, _ctx(tmp_path), from_phase="second", to_phase="first")


def test_failed_phase_is_recorded_and_stops(tmp_path):
    phases = [FailingPhase("first", "first.out"), WritePhase("second", "second.out")]
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    with pytest.raises(RuntimeError, match="bad input"):
        runner.run_pipeline(phases, _ctx(tmp_path))
    assert phases[1].runs == 0
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["phases"]["first"]["status"] == "failed"
    assert data["phases"]["first"]["error"]["message"] == "bad input"


def test_raising_phase_records_traceback(tmp_path):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    ok, err = runner.run_phase(RaisingPhase("solo", "solo.out"), _ctx(tmp_path))
    assert not ok and err == "boom"
    record = JsonManifest(tmp_path).get_phase_data("solo")
    assert record["error"]["type"] == "RuntimeError"
    assert "Traceback" in record["error"]["traceback"]


def test_missing_required_input(tmp_path):
    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    ok, err = runner.run_phase(WritePhase("late", "late.out", requires=["early.out"]), _ctx(tmp_path))
    assert not ok and "does not exist" in err


def test_undeclared_output_is_an_error(tmp_path):
    class Liar(WritePhase):
        def run(self, ctx, inputs, outputs):
            return PhaseResult(status="succeeded", outputs=[self._provides])

    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    ok, err = runner.run_phase(Liar("liar", "liar.out"), _ctx(tmp_path))
    assert not ok and "did not write output" in err


def test_artifact_and_outputs_helpers(tmp_path):
    (tmp_path / "teacher").mkdir()
    (tmp_path / "report.json").write_text("{}")
    assert artifact_kind(tmp_path / "teacher") == "archive"
    assert artifact_kind(tmp_path / "report.json") == "json"
    assert artifact_kind(tmp_path / "metrics.jsonl") == "jsonl"

    art = Artifact(key="pretrain.model", relpath="teacher", kind="archive")
    assert art.producer == "pretrain"
    ctx = _ctx(tmp_path)
    assert ctx.input_path({"pretrain.model": art}, "pretrain.model") == tmp_path / "teacher"
    with pytest.raises(KeyError, match="not resolved"):
        ctx.input_path({}, "pretrain.model")

    outputs = ResolvedOutputs(paths={"quantize.student": tmp_path / "student", "audit.report": tmp_path / "audit.json"})
    assert outputs.for_phase("quantize") == {"student": tmp_path / "student"}


def test_seed_defaults_to_zero(tmp_path):
    assert RunContext(job_id="t", workspace=str(tmp_path), config={}).seed == 0
    assert RunContext(job_id="t", workspace=str(tmp_path), config={"seed": "7"}).seed == 7


def test_processor_result_maps_to_artifact_keys():
    result = ProcessorResult(outputs=["student", "report"], report={"kind": "train"}, metrics={"acc": 0.5}, warnings=["w"])
    phase_result = result.to_phase_result("quantize")
    assert phase_result.status == "succeeded"
    assert phase_result.outputs == ["quantize.student", "quantize.report"]
    assert phase_result.metrics == {"acc": 0.5} and phase_result.warnings == ["w"]


def test_warnings_reach_the_manifest(tmp_path):
    class Noisy(WritePhase):
        def run(self, ctx, inputs, outputs):
            result = super().run(ctx, inputs, outputs)
            result.warnings.append("no evaluation data")
            return result

    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    assert runner.run_phase(Noisy("noisy", "noisy.out"), _ctx(tmp_path)) == (True, None)
    assert JsonManifest(tmp_path).get_phase_data("noisy")["warnings"] == ["no evaluation data"]


def test_output_outside_provides_is_an_error(tmp_path):
    class Stray(WritePhase):
        def run(self, ctx, inputs, outputs):
            super().run(ctx, inputs, outputs)
            return PhaseResult(status="succeeded", outputs=["elsewhere.out"])

    runner = PhaseRunner(JsonManifest(tmp_path), tmp_path)
    ok, err = runner.run_phase(Stray("stray", "stray.out"), _ctx(tmp_path))
    assert not ok and "not in phase.provides()" in err


def test_registry_matches_phase_classes():
    for phase in ALL_PHASES:
        loaded = phase.load()
        assert loaded.label == phase.label
    assert PHASE_NAMES == ["pretrain", "quantize", "audit"]
