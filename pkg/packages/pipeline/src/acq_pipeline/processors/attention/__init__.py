"""
Attention 模块

公共 API：
- attention_maps(): 可微 N×h×w map（供 loss 使用）
- attention_matrix(): AttentionMap（含 center）
- position_index() / p_to_cell(): 位置编号与网格坐标互转
- map_distance() / export_heatmap() / export_mode_pair() / attention_diversity()
"""
from .impl import (
    AttentionMap,
    attention_diversity,
    attention_maps,
    attention_matrix,
    centers_of,
    chebyshev,
    export_heatmap,
    export_mode_pair,
    map_center,
    map_distance,
    p_to_cell,
    position_index,
    upscale_nearest,
)

__all__ = [
    "AttentionMap",
    "attention_diversity",
    "attention_maps",
    "attention_matrix",
    "centers_of",
    "chebyshev",
    "export_heatmap",
    "export_mode_pair",
    "map_center",
    "map_distance",
    "p_to_cell",
    "position_index",
    "upscale_nearest",
]
