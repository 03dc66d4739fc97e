"""
Pipeline phases registration.

``acq-pipeline phases`` 只读这里的静态声明，不 import 训练代码；
phase 类在第一次 run() 时才加载，并核对声明与类上的元数据一致。
"""
import importlib
from dataclasses import dataclass, field
from typing import List


@dataclass
class LazyPhase:
    """``target`` 形如 ``"acq_pipeline.phases.quantize:QuantizePhase"``。"""

    target: str
    name: str
    version: str
    requires_keys: List[str]
    provides_keys: List[str]
    label: str = ""
    _instance: object = field(default=None, init=False, repr=False)

    def load(self):
        if self._instance is None:
            module_path, class_name = self.target.split(":")
            phase = getattr(importlib.import_module(module_path), class_name)()
            declared = (self.name, self.version, self.requires_keys, self.provides_keys)
            actual = (phase.name, phase.version, phase.requires(), phase.provides())
            if declared != actual:
                raise RuntimeError(f"phase registry is stale for {self.target}: {declared} != {actual}")
            self._instance = phase
        return self._instance

    def requires(self) -> List[str]:
        return list(self.requires_keys)

    def provides(self) -> List[str]:
        return list(self.provides_keys)

    def run(self, ctx, inputs, outputs):
        return self.load().run(ctx, inputs, outputs)


def build_phases() -> List[LazyPhase]:
    return [
        LazyPhase(
            "acq_pipeline.phases.pretrain:PretrainPhase",
            name="pretrain",
            version="1.0.0",
            requires_keys=[],
            provides_keys=["pretrain.model", "pretrain.data"],
            label="预训练 teacher",
        ),
        LazyPhase(
            "acq_pipeline.phases.quantize:QuantizePhase",
            name="quantize",
            version="1.0.0",
            requires_keys=["pretrain.model"],
            provides_keys=["quantize.student", "quantize.generator", "quantize.report", "quantize.metrics"],
            label="ACQ 量化训练",
        ),
        LazyPhase(
            "acq_pipeline.phases.audit:AuditPhase",
            name="audit",
            version="1.0.0",
            requires_keys=["pretrain.model", "quantize.generator"],
            provides_keys=["audit.report"],
            label="模式一致性审计",
        ),
    ]


ALL_PHASES = build_phases()
PHASE_NAMES = [p.name for p in ALL_PHASES]
