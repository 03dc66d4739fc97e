"""
Processor 返回类型

processor 只写调用方给的路径，并用不带 phase 前缀的名字报告写了什么
（"student"、"report"）；phase 用 to_phase_result() 换成 artifact key。
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from acq_pipeline.types import PhaseResult


@dataclass
class ProcessorResult:
    """
    - outputs: 已写出的产物名
    - report: 已写出的 report（train / audit），没有则为 None
    - metrics: 进 manifest 的少量标量（精度、controllability）
    - warnings: 非致命问题，例如缺少评估数据
    """
    outputs: List[str] = field(default_factory=list)
    report: Optional[Dict[str, Any]] = None
    metrics: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def to_phase_result(self, phase: str) -> PhaseResult:
        return PhaseResult(
            status="succeeded",
            outputs=[f"{phase}.{name}" for name in self.outputs],
            metrics=dict(self.metrics),
            warnings=list(self.warnings),
        )
