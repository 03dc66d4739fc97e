"""
Generator 模块

公共 API：
- build_generator() / rebuild_generator(): GeneratorNet 构建
- condition_fuse_lowdim() / position_grid(): 条件融合
- generate(): G(z | y, p)
- ConditionSampler: z / y / p 抽样流
"""
from .impl import (
    ConditionHead,
    ConditionSampler,
    GeneratorNet,
    build_generator,
    condition_fuse_lowdim,
    generate,
    position_grid,
    rebuild_generator,
)

__all__ = [
    "ConditionHead",
    "ConditionSampler",
    "GeneratorNet",
    "build_generator",
    "condition_fuse_lowdim",
    "generate",
    "position_grid",
    "rebuild_generator",
]
