"""
Metrics Processor: mode-consistency audit（phase / CLI 入口）

样本来源：
- generator：生成 ``count`` 个样本（均匀 y、p），只保留 teacher eval 模式预测正确的样本
- dataset：真实样本的前 ``count`` 个，同样只保留 eval 模式预测正确的样本
两者都给出时，顶层字段取生成样本的结果，真实样本结果放在 ``authentic``。
"""
from pathlib import Path
from typing import Any, Dict, Optional

from acq_core.nn.graph import LayerGraph
from acq_core.utils.logger import info
from acq_pipeline.processors.attention import attention_diversity
from acq_pipeline.processors.data import ImageDataset
from acq_pipeline.processors.generator import GeneratorNet
from acq_pipeline.schema.reports import write_report

from .._types import ProcessorResult
from .impl import attention_controllability, generated_attention, mode_consistency, select_eval_correct


def _audit_samples(teacher: LayerGraph, images, labels, batch_size: int) -> Dict[str, Any]:
    keep = select_eval_correct(teacher, images, labels)
    info(f"audit: {len(keep)}/{len(labels)} samples correct in eval mode")
    return mode_consistency(teacher, images[keep], labels[keep], batch_size=batch_size).to_dict()


def run_audit(
    teacher: LayerGraph,
    *,
    report_path: Path,
    generator: Optional[GeneratorNet] = None,
    dataset: Optional[ImageDataset] = None,
    count: int = 960,
    batch_size: int = 16,
    seed: int = 0,
) -> ProcessorResult:
    """
    Mode-consistency audit of the teacher on generated and / or authentic samples.

    Returns:
        ProcessorResult:
        - report: audit report（已写到 report_path）
    """
    if generator is None and dataset is None:
        raise ValueError("run_audit needs a generator, a dataset, or both")
    report: Dict[str, Any] = {"kind": "audit", "seed": seed}
    if dataset is not None:
        n = min(count, len(dataset))
        report["authentic"] = _audit_samples(teacher, dataset.images[:n], dataset.labels[:n], batch_size)
    if generator is not None:
        view = generated_attention(teacher, generator, count, seed)
        report["generated"] = _audit_samples(teacher, view["images"], view["y"], batch_size)
        report["controllability"] = attention_controllability(teacher, generator, count, seed)
        report["diversity"] = attention_diversity(view["maps"], view["y"])
    report.update(report.get("generated") or report["authentic"])
    write_report(report_path, "audit", report)
    metrics = {k: report[k] for k in ("acc_eval", "acc_train", "bns_err_eval", "bns_err_train")}
    return ProcessorResult(outputs=["report"], report=report, metrics=metrics)
