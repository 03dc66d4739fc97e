"""
Layers: conv / linear / BN (dual-mode) / class-conditional BN / activations / pooling.

BN 存储 running_mean 与 running_std（σ 直接存储，含 1e-5 floor），
train 模式用 batch 自身统计量归一化，eval 模式用存储统计量；两种模式下
forward 都不会修改存储统计量（只有 pretrain 显式调用 update_running_stats）。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from acq_core.autodiff import ops
from acq_core.autodiff.rng import SeededRng
from acq_core.autodiff.tensor import Tensor

BN_EPS = 1e-5

# Quantizer hook: called on a weight / input tensor, returns the (fake-)quantized tensor.
QuantHook = Callable[[Tensor], Tensor]


@dataclass
class ForwardContext:
    """Per-forward state shared by all layers of one pass."""
    mode: str = "eval"  # eval | train
    labels: Optional[np.ndarray] = None  # class labels for CCBN
    positions: Optional[np.ndarray] = None  # attention-center condition p
    record_stats: bool = True
    capture: bool = False  # keep pre-BN activations (numpy) for replay checks
    means: Dict[str, Tensor] = field(default_factory=dict)
    stds: Dict[str, Tensor] = field(default_factory=dict)
    pre_bn: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("eval", "train"):
            raise ValueError(f"mode must be 'eval' or 'train', got {self.mode!r}")


class Layer:
    """Base layer: named parameters, numpy buffers and child layers."""

    kind = "layer"

    def __init__(self):
        self.name = ""
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}
        self._children: Dict[str, "Layer"] = {}

    def add_param(self, key: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=key)
        self._params[key] = t
        return t

    def add_child(self, key: str, layer: "Layer") -> "Layer":
        self._children[key] = layer
        return layer

    def set_name(self, name: str) -> None:
        self.name = name
        for key, child in self._children.items():
            child.set_name(f"{name}.{key}")

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for key, t in self._params.items():
            yield f"{self.name}.{key}", t
        for child in self._children.values():
            yield from child.named_parameters()

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        for key, b in self._buffers.items():
            yield f"{self.name}.{key}", b
        for child in self._children.values():
            yield from child.named_buffers()

    def set_buffer(self, key: str, value: np.ndarray) -> None:
        if key not in self._buffers:
            raise KeyError(f"{self.name}: no buffer {key!r}")
        if value.shape != self._buffers[key].shape:
            raise ValueError(f"{self.name}.{key}: shape {value.shape} != {self._buffers[key].shape}")
        self._buffers[key] = np.asarray(value, dtype=np.float32).copy()

    def layers(self) -> Iterator["Layer"]:
        """This layer and every descendant, depth first."""
        yield self
        for child in self._children.values():
            yield from child.layers()

    def config(self) -> Dict[str, Any]:
        return {}

    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        return self.forward(x, ctx)


class QuantizableLayer(Layer):
    """Conv / linear: optional weight and input quantizer hooks."""

    def __init__(self):
        super().__init__()
        self.weight_quantizer: Optional[QuantHook] = None
        self.input_quantizer: Optional[QuantHook] = None

    def _quantized_io(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        w = self._params["weight"]
        if self.input_quantizer is not None:
            x = self.input_quantizer(x)
        if self.weight_quantizer is not None:
            w = self.weight_quantizer(w)
        return x, w


class Conv2d(QuantizableLayer):
    kind = "conv"

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: SeededRng,
        stride: int = 1,
        padding: int = 0,
        bias: bool = False,
    ):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = in_channels * kernel * kernel
        # He-normal
        self.add_param("weight", rng.normal((out_channels, in_channels, kernel, kernel), std=float(np.sqrt(2.0 / fan_in))))
        self.has_bias = bias
        if bias:
            self.add_param("bias", np.zeros(out_channels, dtype=np.float32))

    def config(self) -> Dict[str, Any]:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "bias": self.has_bias,
        }

    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        x, w = self._quantized_io(x)
        return ops.conv2d(x, w, self._params.get("bias"), stride=self.stride, padding=self.padding)


class Linear(QuantizableLayer):
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: SeededRng, bias: bool = True):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        bound = float(np.sqrt(1.0 / in_features))
        self.add_param("weight", rng.uniform(-bound, bound, (out_features, in_features)))
        self.has_bias = bias
        if bias:
            self.add_param("bias", np.zeros(out_features, dtype=np.float32))

    def config(self) -> Dict[str, Any]:
        return {"in_features": self.in_features, "out_features": self.out_features, "bias": self.has_bias}

    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"{self.name}: expected N×{self.in_features} input, got {x.shape}")
        x, w = self._quantized_io(x)
        out = ops.matmul(x, ops.transpose(w, (1, 0)))
        if self.has_bias:
            out = out + self._params["bias"]
        return out


def _batch_stats(name: str, x: Tensor, ctx: ForwardContext, need_batch: bool) -> Tuple[Optional[Tensor], Optional[Tensor]]:
    """Per-channel batch mean / std (biased variance, 1e-5 floor)."""
    if need_batch and x.shape[0] < 2:
        raise ValueError(f"{name}: train-mode BN needs batch size >= 2, got {x.shape[0]}")
    if not (need_batch or ctx.record_stats):
        return None, None
    mean = ops.mean(x, axis=(0, 2, 3), keepdims=True)
    std = ops.sqrt(ops.var(x, axis=(0, 2, 3), keepdims=True) + BN_EPS)
    if ctx.record_stats:
        c = x.shape[1]
        ctx.means[name] = ops.reshape(mean, (c,))
        ctx.stds[name] = ops.reshape(std, (c,))
    if ctx.capture:
        ctx.pre_bn[name] = x.data.copy()
    return mean, std


class BatchNorm2d(Layer):
    """Dual-mode BN: batch statistics in train mode, stored statistics in eval mode."""

    kind = "bn"

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.add_param("gamma", np.ones(channels, dtype=np.float32))
        self.add_param("beta", np.zeros(channels, dtype=np.float32))
        self._buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self._buffers["running_std"] = np.ones(channels, dtype=np.float32)

    @property
    def running_mean(self) -> np.ndarray:
        return self._buffers["running_mean"]

    @property
    def running_std(self) -> np.ndarray:
        return self._buffers["running_std"]

    def config(self) -> Dict[str, Any]:
        return {"channels": self.channels}

    def _check(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"{self.name}: expected N×{self.channels}×H×W input, got {x.shape}")

    def normalize(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        self._check(x)
        train = ctx.mode == "train"
        mean, std = _batch_stats(self.name, x, ctx, need_batch=train)
        if not train:
            mean = Tensor(self.running_mean.reshape(1, -1, 1, 1))
            std = Tensor(self.running_std.reshape(1, -1, 1, 1))
        return (x - mean) / std

    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        xhat = self.normalize(x, ctx)
        c = self.channels
        return xhat * ops.reshape(self._params["gamma"], (1, c, 1, 1)) + ops.reshape(self._params["beta"], (1, c, 1, 1))


class ClassConditionalBN(BatchNorm2d):
    """Batch-statistics BN followed by a per-class affine row γ_y, β_y."""

    kind = "ccbn"

    def __init__(self, channels: int, num_classes: int):
        Layer.__init__(self)
        self.channels, self.num_classes = channels, num_classes
        self.add_param("gamma", np.ones((num_classes, channels), dtype=np.float32))
        self.add_param("beta", np.zeros((num_classes, channels), dtype=np.float32))
        self._buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self._buffers["running_std"] = np.ones(channels, dtype=np.float32)

    def config(self) -> Dict[str, Any]:
        return {"channels": self.channels, "num_classes": self.num_classes}

    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        if ctx.labels is None:
            raise ValueError(f"{self.name}: class-conditional BN needs labels")
        labels = np.asarray(ctx.labels, dtype=np.int64)
        if labels.shape != (x.shape[0],):
            raise ValueError(f"{self.name}: labels shape {labels.shape} does not match batch {x.shape[0]}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"{self.name}: label out of range [0, {self.num_classes})")
        self._check(x)
        mean, std = _batch_stats(self.name, x, ctx, need_batch=True)
        xhat = (x - mean) / std
        n, c = x.shape[0], self.channels
        gamma = ops.reshape(ops.embedding(self._params["gamma"], labels), (n, c, 1, 1))
        beta = ops.reshape(ops.embedding(self._params["beta"], labels), (n, c, 1, 1))
        return xhat * gamma + beta


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, ctx):
        return ops.relu(x)


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope: float = 0.2):
        super().__init__()
        self.slope = slope

    def config(self):
        return {"slope": self.slope}

    def forward(self, x, ctx):
        return ops.leaky_relu(x, self.slope)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, ctx):
        return ops.tanh(x)


class MaxPool2d(Layer):
    kind = "maxpool"

    def __init__(self, kernel: int):
        super().__init__()
        self.kernel = kernel

    def config(self):
        return {"kernel": self.kernel}

    def forward(self, x, ctx):
        return ops.max_pool2d(x, self.kernel)


class GlobalAvgPool(Layer):
    """N×C×H×W → N×C."""

    kind = "gap"

    def forward(self, x, ctx):
        return ops.mean(x, axis=(2, 3))


class Upsample(Layer):
    kind = "upsample"

    def __init__(self, scale: int = 2):
        super().__init__()
        self.scale = scale

    def config(self):
        return {"scale": self.scale}

    def forward(self, x, ctx):
        return ops.upsample_nearest(x, self.scale)


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers: List[Tuple[str, Layer]]):
        super().__init__()
        for key, layer in layers:
            self.add_child(key, layer)

    def forward(self, x, ctx):
        for child in self._children.values():
            x = child(x, ctx)
        return x


class ResidualBlock(Layer):
    """conv-BN-relu-conv-BN + shortcut, relu. 1×1 conv + BN shortcut only on shape change."""

    kind = "residual"

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: SeededRng):
        super().__init__()
        self.in_channels, self.out_channels, self.stride = in_channels, out_channels, stride
        self.add_child("conv1", Conv2d(in_channels, out_channels, 3, rng.child("conv1"), stride=stride, padding=1))
        self.add_child("bn1", BatchNorm2d(out_channels))
        self.add_child("conv2", Conv2d(out_channels, out_channels, 3, rng.child("conv2"), padding=1))
        self.add_child("bn2", BatchNorm2d(out_channels))
        self.projected = in_channels != out_channels or stride != 1
        if self.projected:
            self.add_child("shortcut", Conv2d(in_channels, out_channels, 1, rng.child("shortcut"), stride=stride))
            self.add_child("shortcut_bn", BatchNorm2d(out_channels))

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels, "stride": self.stride}

    def forward(self, x, ctx):
        ch = self._children
        out = ops.relu(ch["bn1"](ch["conv1"](x, ctx), ctx))
        out = ch["bn2"](ch["conv2"](out, ctx), ctx)
        identity = ch["shortcut_bn"](ch["shortcut"](x, ctx), ctx) if self.projected else x
        return ops.relu(out + identity)
