"""
LayerGraph: ordered network with a backbone tap and a mode flag.

同一个容器承担 FP teacher、量化 student 与 generator body 三种角色。
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from acq_core.autodiff.tensor import Tensor
from acq_core.fingerprints import hash_arrays
from acq_core.nn.layers import BatchNorm2d, ForwardContext, Layer, QuantizableLayer


@dataclass
class BatchStatsRecord:
    """Per-BN-layer batch mean / std captured during one forward pass."""
    mode: str
    means: Dict[str, Tensor] = field(default_factory=dict)
    stds: Dict[str, Tensor] = field(default_factory=dict)
    pre_bn: Dict[str, np.ndarray] = field(default_factory=dict)

    def layer_names(self) -> List[str]:
        return list(self.means)

    def as_numpy(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        return {k: (self.means[k].data, self.stds[k].data) for k in self.means}


@dataclass
class ForwardResult:
    logits: Tensor
    backbone: Optional[Tensor]
    stats: BatchStatsRecord


class LayerGraph:
    """
    Ordered top-level layers.

    ``backbone_tap`` names the top-level layer whose output is the backbone
    activation used for attention maps. ``arch`` holds the build descriptor so
    archives can rebuild the same topology.
    """

    def __init__(
        self,
        layers: List[Tuple[str, Layer]],
        backbone_tap: Optional[str] = None,
        arch: Optional[Dict[str, Any]] = None,
        mode: str = "eval",
    ):
        self._layers: Dict[str, Layer] = {}
        for key, layer in layers:
            if key in self._layers:
                raise ValueError(f"duplicate layer name {key!r}")
            layer.set_name(key)
            self._layers[key] = layer
        if backbone_tap is not None and backbone_tap not in self._layers:
            raise ValueError(f"backbone tap {backbone_tap!r} is not a top-level layer")
        self.backbone_tap = backbone_tap
        self.arch: Dict[str, Any] = dict(arch or {})
        self.mode = mode

    # ── structure ──

    @property
    def top_level(self) -> Dict[str, Layer]:
        return self._layers

    def layers(self) -> Iterator[Layer]:
        for layer in self._layers.values():
            yield from layer.layers()

    def bn_layers(self) -> List[BatchNorm2d]:
        return [l for l in self.layers() if isinstance(l, BatchNorm2d)]

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        out: List[Tuple[str, Tensor]] = []
        for layer in self._layers.values():
            out.extend(layer.named_parameters())
        return out

    def named_buffers(self) -> List[Tuple[str, np.ndarray]]:
        out: List[Tuple[str, np.ndarray]] = []
        for layer in self._layers.values():
            out.extend(layer.named_buffers())
        return out

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.parameters()))

    def stored_stats(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        """BN layer name → (running_mean, running_std)."""
        return {bn.name: (bn.running_mean, bn.running_std) for bn in self.bn_layers()}

    # ── forward ──

    def forward(
        self,
        batch: Tensor,
        mode: Optional[str] = None,
        labels: Optional[np.ndarray] = None,
        positions: Optional[np.ndarray] = None,
        record_stats: bool = True,
        capture: bool = False,
    ) -> ForwardResult:
        """Run every layer in order; stored BN statistics are never written."""
        if batch.ndim < 2:
            raise ValueError(f"forward: expected a batched input, got {batch.shape}")
        ctx = ForwardContext(
            mode=mode or self.mode,
            labels=labels,
            positions=positions,
            record_stats=record_stats,
            capture=capture,
        )
        x = batch
        backbone = None
        for key, layer in self._layers.items():
            x = layer(x, ctx)
            if key == self.backbone_tap:
                backbone = x
        stats = BatchStatsRecord(mode=ctx.mode, means=ctx.means, stds=ctx.stds, pre_bn=ctx.pre_bn)
        return ForwardResult(logits=x, backbone=backbone, stats=stats)

    __call__ = forward

    # ── state ──

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: t.data.copy() for name, t in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        expected = set(params) | {name for name, _ in self.named_buffers()}
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, t in params.items():
            value = np.asarray(state[name], dtype=np.float32)
            if value.shape != t.shape:
                raise ValueError(f"{name}: shape {value.shape} != {t.shape}")
            t.data = value.copy()
        for layer in self.layers():
            for key in list(layer._buffers):
                layer.set_buffer(key, state[f"{layer.name}.{key}"])

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()

    def freeze(self) -> "LayerGraph":
        """Stop parameter gradients (teacher); gradients still flow through to inputs."""
        for t in self.parameters():
            t.requires_grad = False
            t.grad = None
        return self

    def clone(self) -> "LayerGraph":
        """Deep copy, gradients dropped."""
        twin = copy.deepcopy(self)
        twin.zero_grad()
        return twin

    def digest(self) -> str:
        """sha256 over every parameter and buffer."""
        return hash_arrays(sorted(self.state_dict().items()))


def bn_digest(graph: LayerGraph) -> str:
    """sha256 over every stored BN statistic."""
    named: List[Tuple[str, np.ndarray]] = []
    for bn in graph.bn_layers():
        named.append((f"{bn.name}.running_mean", bn.running_mean))
        named.append((f"{bn.name}.running_std", bn.running_std))
    return hash_arrays(named)


def update_running_stats(graph: LayerGraph, stats: BatchStatsRecord, momentum: float = 0.1) -> None:
    """
    EMA update of stored BN statistics from a train-mode record.

    mean ← (1−m)·mean + m·μ_batch; the variance σ² is averaged the same way.
    Only pretraining calls this.
    """
    if stats.mode != "train":
        raise ValueError("update_running_stats needs a train-mode record")
    for bn in graph.bn_layers():
        if bn.name not in stats.means:
            continue
        mu = stats.means[bn.name].data.astype(np.float64)
        sd = stats.stds[bn.name].data.astype(np.float64)
        mean = (1.0 - momentum) * bn.running_mean.astype(np.float64) + momentum * mu
        var = (1.0 - momentum) * np.square(bn.running_std.astype(np.float64)) + momentum * np.square(sd)
        bn.set_buffer("running_mean", mean.astype(np.float32))
        bn.set_buffer("running_std", np.sqrt(var).astype(np.float32))


def check_structure(stats: BatchStatsRecord, stored: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> List[str]:
    """Layer names shared by a record and stored stats; mismatches are errors."""
    names = list(stats.means)
    if set(names) != set(stored):
        raise ValueError(f"BN structure mismatch: record {sorted(names)} vs stored {sorted(stored)}")
    for name in names:
        if stats.means[name].shape != stored[name][0].shape:
            raise ValueError(
                f"BN {name}: channel mismatch {stats.means[name].shape} vs {stored[name][0].shape}"
            )
    return names


def quantizable_layers(graph: LayerGraph) -> List[QuantizableLayer]:
    """Conv / linear layers in forward order."""
    return [l for l in graph.layers() if isinstance(l, QuantizableLayer)]
