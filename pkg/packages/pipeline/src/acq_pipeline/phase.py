"""
Phase contract.

A phase reads upstream artifacts, calls one processor and returns a
PhaseResult; the runner owns fingerprints, output allocation and the manifest.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Dict, List

from acq_pipeline.types import Artifact, PhaseResult, ResolvedOutputs, RunContext


class Phase(ABC):
    name: str
    version: str  # bump on any change to outputs or their meaning; invalidates downstream
    label: str = ""

    @abstractmethod
    def requires(self) -> List[str]:
        """Upstream artifact keys, e.g. ``["pretrain.model"]``."""

    @abstractmethod
    def provides(self) -> List[str]:
        """Artifact keys this phase writes, all under its own name."""

    @abstractmethod
    def run(self, ctx: RunContext, inputs: Dict[str, Artifact], outputs: ResolvedOutputs) -> PhaseResult:
        """失败可以 raise，也可以返回 status="failed"；两种都会被 runner 记进 manifest。"""

