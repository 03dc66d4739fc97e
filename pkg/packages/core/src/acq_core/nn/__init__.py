"""Layers, LayerGraph, target-net zoo and optimizers."""
from acq_core.nn.layers import (
    BN_EPS,
    BatchNorm2d,
    ClassConditionalBN,
    Conv2d,
    ForwardContext,
    GlobalAvgPool,
    Layer,
    LeakyReLU,
    Linear,
    MaxPool2d,
    QuantizableLayer,
    ReLU,
    ResidualBlock,
    Sequential,
    Tanh,
    Upsample,
)
from acq_core.nn.graph import (
    BatchStatsRecord,
    ForwardResult,
    LayerGraph,
    bn_digest,
    check_structure,
    quantizable_layers,
    update_running_stats,
)
from acq_core.nn.zoo import build_target_net, known_specs, rebuild_target_net
from acq_core.nn.optim import Adam, SGD, step_lr

__all__ = [
    "BN_EPS",
    "BatchNorm2d",
    "ClassConditionalBN",
    "Conv2d",
    "ForwardContext",
    "GlobalAvgPool",
    "Layer",
    "LeakyReLU",
    "Linear",
    "MaxPool2d",
    "QuantizableLayer",
    "ReLU",
    "ResidualBlock",
    "Sequential",
    "Tanh",
    "Upsample",
    "BatchStatsRecord",
    "ForwardResult",
    "LayerGraph",
    "bn_digest",
    "check_structure",
    "quantizable_layers",
    "update_running_stats",
    "build_target_net",
    "known_specs",
    "rebuild_target_net",
    "Adam",
    "SGD",
    "step_lr",
]
