"""
Quantize Phase: ACQ 量化训练

输入:
  - pretrain.model: teacher archive
  - pretrain.data（可选读取）: 提供评估用测试集
输出:
  - quantize.student / quantize.generator: archive 目录
  - quantize.report: 训练 report（report.json）
  - quantize.metrics: 每个 iteration 一行的 JSONL

config (phases.quantize):
  profile: schedule profile（默认 desk）
  loss: loss profile（默认 cifar10）
  train: TrainConfig 局部覆盖（嵌套 dict）
  diagnostic_count: controllability / diversity 的样本数
  evaluate: 是否用测试集评估（默认 True）
"""
import json
from pathlib import Path
from typing import Dict, Optional

from acq_core.config import merge_train_config, resolve_train_config
from acq_core.utils.logger import warning
from acq_pipeline.archive import load_model
from acq_pipeline.manifest import resolve_artifact_path
from acq_pipeline.phase import Phase
from acq_pipeline.processors.data import ImageDataset, load_dataset
from acq_pipeline.processors.training import run as training_run
from acq_pipeline.types import Artifact, PhaseResult, ResolvedOutputs, RunContext


def load_eval_data(workspace: Path) -> Optional[ImageDataset]:
    """Test split described by pretrain.data, if the pretrain phase wrote one."""
    path = resolve_artifact_path("pretrain.data", workspace)
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return load_dataset(doc["dataset"], "test")


class QuantizePhase(Phase):
    name = "quantize"
    version = "1.0.0"
    label = "ACQ 量化训练"

    def requires(self) -> list[str]:
        return ["pretrain.model"]

    def provides(self) -> list[str]:
        return ["quantize.student", "quantize.generator", "quantize.report", "quantize.metrics"]

    def run(self, ctx: RunContext, inputs: Dict[str, Artifact], outputs: ResolvedOutputs) -> PhaseResult:
        section = ctx.phase_config(self.name)
        cfg = resolve_train_config(section.get("profile", "desk"), section.get("loss", "cifar10"))
        cfg = merge_train_config(cfg, {**section.get("train", {}), "seed": ctx.seed})
        cfg.validate()

        teacher = load_model(ctx.input_path(inputs, "pretrain.model"))
        eval_data = load_eval_data(ctx.root) if section.get("evaluate", True) else None

        paths = outputs.for_phase(self.name)
        result = training_run(
            cfg,
            teacher,
            student_dir=paths["student"],
            generator_dir=paths["generator"],
            report_path=paths["report"],
            metrics_path=paths["metrics"],
            eval_data=eval_data,
            emitter=ctx.emitter,
            run_id=ctx.job_id,
            diagnostic_count=int(section.get("diagnostic_count", 256)),
        )
        for message in result.warnings:
            warning(f"quantize: {message}")
        return result.to_phase_result(self.name)
