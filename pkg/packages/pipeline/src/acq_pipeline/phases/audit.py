"""
Audit Phase: teacher 在生成样本（及真实样本）上的 eval / train 模式一致性

输入:
  - pretrain.model: teacher archive
  - quantize.generator: generator archive
输出:
  - audit.report: audit.json

config (phases.audit): count（默认 960）、batch_size（默认 16）、authentic（默认 True）
"""
from typing import Dict

from acq_pipeline.archive import load_model
from acq_pipeline.phase import Phase
from acq_pipeline.phases.quantize import load_eval_data
from acq_pipeline.processors.metrics import run_audit
from acq_pipeline.types import Artifact, PhaseResult, ResolvedOutputs, RunContext


class AuditPhase(Phase):
    name = "audit"
    version = "1.0.0"
    label = "模式一致性审计"

    def requires(self) -> list[str]:
        return ["pretrain.model", "quantize.generator"]

    def provides(self) -> list[str]:
        return ["audit.report"]

    def run(self, ctx: RunContext, inputs: Dict[str, Artifact], outputs: ResolvedOutputs) -> PhaseResult:
        section = ctx.phase_config(self.name)
        teacher = load_model(ctx.input_path(inputs, "pretrain.model"))
        generator = load_model(ctx.input_path(inputs, "quantize.generator"))
        dataset = load_eval_data(ctx.root) if section.get("authentic", True) else None

        result = run_audit(
            teacher,
            report_path=outputs.get("audit.report"),
            generator=generator,
            dataset=dataset,
            count=int(section.get("count", 960)),
            batch_size=int(section.get("batch_size", 16)),
            seed=ctx.seed,
        )
        return result.to_phase_result(self.name)
