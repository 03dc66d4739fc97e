"""
Quantizer 模块

公共 API：
- QuantizerState / fake_quantize / observe / freeze
- parse_bits(): 'NwMa' 位宽字符串
- quantize_graph(): FP 网络 → 带量化器的 student 副本
"""
from .impl import (
    PER_CHANNEL,
    PER_LAYER,
    QuantizerHook,
    QuantizerState,
    activation_states,
    all_frozen,
    attach_quantizers,
    check_bits,
    fake_quantize,
    freeze,
    freeze_activations,
    observe,
    parse_bits,
    quantize_graph,
    quantizer_states,
    weight_state,
)

__all__ = [
    "PER_CHANNEL",
    "PER_LAYER",
    "QuantizerHook",
    "QuantizerState",
    "activation_states",
    "all_frozen",
    "attach_quantizers",
    "check_bits",
    "fake_quantize",
    "freeze",
    "freeze_activations",
    "observe",
    "parse_bits",
    "quantize_graph",
    "quantizer_states",
    "weight_state",
]
