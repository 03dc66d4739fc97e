"""
Pretrain Phase: 训练 FP teacher

输入: 无（数据集由 config 描述）
输出:
  - pretrain.model: teacher archive 目录
  - pretrain.data: 数据集描述 + 测试准确率（data.json）

config (phases.pretrain):
  dataset: {"kind": "shapes", ...} | {"kind": "cifar10", "path": ...}（默认 shapes）
  spec / epochs / batch_size / lr / momentum / weight_decay / bn_momentum / width
"""
import json
from typing import Dict

from acq_core.utils.logger import info
from acq_pipeline.phase import Phase
from acq_pipeline.processors.data import PretrainOptions, dataset_descriptor, run_pretrain
from acq_pipeline.types import Artifact, PhaseResult, ResolvedOutputs, RunContext


class PretrainPhase(Phase):
    name = "pretrain"
    version = "1.0.0"
    label = "预训练 teacher"

    def requires(self) -> list[str]:
        return []

    def provides(self) -> list[str]:
        return ["pretrain.model", "pretrain.data"]

    def run(self, ctx: RunContext, inputs: Dict[str, Artifact], outputs: ResolvedOutputs) -> PhaseResult:
        section = ctx.phase_config(self.name)
        descriptor = section.pop("dataset", None) or dataset_descriptor("shapes")
        opts = PretrainOptions(**{"seed": ctx.seed, **section})

        result = run_pretrain(
            descriptor,
            opts,
            model_dir=outputs.get("pretrain.model"),
            emitter=ctx.emitter,
            run_id=ctx.job_id,
        )
        data_doc = {"dataset": descriptor, "spec": opts.spec, **result.metrics}
        with open(outputs.get("pretrain.data"), "w", encoding="utf-8") as f:
            json.dump(data_doc, f, indent=2, sort_keys=True)
            f.write("\n")
        info(f"pretrain: test accuracy {result.metrics['test_accuracy']:.4f}")
        result.outputs.append("data")
        return result.to_phase_result(self.name)
