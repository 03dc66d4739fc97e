"""
Shipped target-network descriptors.

tiny-resnet: stem conv → 3 residual stages (strides 1, 2, 2) → GAP → linear.
tiny-plain:  4 conv-BN-relu blocks (strides 1, 2, 2, 1) → GAP → linear.
Both take 32×32 input and expose an 8×8 backbone tap before global pooling.
"""
from __future__ import annotations

from typing import Any, Callable, Dict, List, Tuple

from acq_core.autodiff.rng import SeededRng
from acq_core.nn.graph import LayerGraph
from acq_core.nn.layers import (
    BatchNorm2d,
    Conv2d,
    GlobalAvgPool,
    Layer,
    Linear,
    ReLU,
    ResidualBlock,
    Sequential,
)


def _conv_bn_relu(cin: int, cout: int, stride: int, rng: SeededRng) -> Sequential:
    return Sequential([
        ("conv", Conv2d(cin, cout, 3, rng.child("conv"), stride=stride, padding=1)),
        ("bn", BatchNorm2d(cout)),
        ("relu", ReLU()),
    ])


def _tiny_resnet(num_classes: int, width: int, in_channels: int, rng: SeededRng) -> Tuple[List[Tuple[str, Layer]], str]:
    widths = (width, width * 2, width * 4)
    layers: List[Tuple[str, Layer]] = [("stem", _conv_bn_relu(in_channels, widths[0], 1, rng.child("stem")))]
    cin = widths[0]
    for i, (cout, stride) in enumerate(zip(widths, (1, 2, 2)), start=1):
        layers.append((f"stage{i}", ResidualBlock(cin, cout, stride, rng.child(f"stage{i}"))))
        cin = cout
    layers += [("pool", GlobalAvgPool()), ("fc", Linear(cin, num_classes, rng.child("fc")))]
    return layers, "stage3"


def _tiny_plain(num_classes: int, width: int, in_channels: int, rng: SeededRng) -> Tuple[List[Tuple[str, Layer]], str]:
    plan = ((width, 1), (width * 2, 2), (width * 4, 2), (width * 4, 1))
    layers: List[Tuple[str, Layer]] = []
    cin = in_channels
    for i, (cout, stride) in enumerate(plan, start=1):
        layers.append((f"block{i}", _conv_bn_relu(cin, cout, stride, rng.child(f"block{i}"))))
        cin = cout
    layers += [("pool", GlobalAvgPool()), ("fc", Linear(cin, num_classes, rng.child("fc")))]
    return layers, "block4"


_SPECS: Dict[str, Callable[..., Tuple[List[Tuple[str, Layer]], str]]] = {
    "tiny-resnet": _tiny_resnet,
    "tiny-plain": _tiny_plain,
}


def known_specs() -> List[str]:
    return sorted(_SPECS)


def build_target_net(
    spec: str,
    num_classes: int = 10,
    width: int = 16,
    in_channels: int = 3,
    seed: int = 0,
) -> LayerGraph:
    """Build an initialized LayerGraph for a shipped descriptor; same seed → same parameters."""
    if spec not in _SPECS:
        raise ValueError(f"Unknown architecture spec {spec!r}; known specs: {', '.join(known_specs())}")
    if num_classes < 2 or width < 1:
        raise ValueError(f"num_classes must be >= 2 and width >= 1, got {num_classes}, {width}")
    rng = SeededRng(seed).child(f"init:{spec}")
    layers, tap = _SPECS[spec](num_classes, width, in_channels, rng)
    arch: Dict[str, Any] = {
        "kind": "target",
        "spec": spec,
        "num_classes": num_classes,
        "width": width,
        "in_channels": in_channels,
        "seed": seed,
    }
    return LayerGraph(layers, backbone_tap=tap, arch=arch)


def rebuild_target_net(arch: Dict[str, Any]) -> LayerGraph:
    return build_target_net(
        arch["spec"],
        num_classes=int(arch["num_classes"]),
        width=int(arch["width"]),
        in_channels=int(arch["in_channels"]),
        seed=int(arch.get("seed", 0)),
    )
