"""
Training Processor: ACQ 量化训练（phase 层入口）

职责：
- 调用 run_acq 完成 warm-up + 交替训练
- 把 student / generator archive、report、metrics 流写到 phase 预分配的路径
- 返回 ProcessorResult
"""
from pathlib import Path
from typing import Optional

from acq_core.config.settings import TrainConfig
from acq_core.events import EventEmitter, JsonlListener
from acq_core.nn.graph import LayerGraph
from acq_pipeline.archive import save_model
from acq_pipeline.processors.data import ImageDataset
from acq_pipeline.schema.reports import write_report

from .._types import ProcessorResult
from .impl import run_acq


def run(
    cfg: TrainConfig,
    teacher: LayerGraph,
    *,
    student_dir: Path,
    generator_dir: Path,
    report_path: Path,
    metrics_path: Optional[Path] = None,
    eval_data: Optional[ImageDataset] = None,
    emitter: Optional[EventEmitter] = None,
    run_id: str = "acq",
    checkpoint_dir: Optional[Path] = None,
    diagnostic_count: int = 256,
) -> ProcessorResult:
    """
    执行 ACQ 训练并写出产物。

    Returns:
        ProcessorResult:
        - report: 训练 report（dict）
        - metrics: 最终准确率与 controllability
    """
    emitter = emitter or EventEmitter()
    jsonl = JsonlListener(metrics_path) if metrics_path is not None else None
    if jsonl is not None:
        emitter.on(jsonl)
    try:
        result = run_acq(
            cfg,
            teacher,
            eval_data=eval_data,
            emitter=emitter,
            run_id=run_id,
            checkpoint_dir=checkpoint_dir,
            diagnostic_count=diagnostic_count,
        )
    finally:
        if jsonl is not None:
            jsonl.close()

    save_model(result.student, student_dir)
    save_model(result.generator, generator_dir)
    write_report(report_path, "train", result.report)

    metrics = {
        "fp_accuracy": result.report["fp_accuracy"],
        "final_student_accuracy": result.report["final_student_accuracy"],
    }
    if result.report["controllability"] is not None:
        metrics["controllability"] = result.report["controllability"]["within"]
    warnings = [] if eval_data is not None else ["no evaluation data; student and teacher accuracies are null"]
    outputs = ["student", "generator", "report"] + (["metrics"] if metrics_path is not None else [])
    return ProcessorResult(outputs=outputs, report=result.report, metrics=metrics, warnings=warnings)
