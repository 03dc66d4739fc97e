"""
Harness 模块

公共 API：
- sweep(): 单个参数多取值 × 多 seed
- ablation_harness(): 组件开关组合 × 多 seed
"""
from .impl import (
    ABLATION_ROWS,
    COMPONENTS,
    ablation_harness,
    ablation_rows,
    parse_components,
    resolve_param,
    sweep,
)

__all__ = [
    "ABLATION_ROWS",
    "COMPONENTS",
    "ablation_harness",
    "ablation_rows",
    "parse_components",
    "resolve_param",
    "sweep",
]
