"""
Metrics 模块

公共 API：
- bns_error(): BN 统计量平均绝对偏差
- mode_consistency(): eval / train 两种模式的准确率、BNS error、attention 差异
- attention_controllability(): 生成样本的 attention center 是否落在条件位置附近
- run_audit(): 审计入口（写 audit report）
"""
from .impl import (
    ModeConsistencyReport,
    attention_controllability,
    bns_error,
    generated_attention,
    generated_diversity,
    mode_consistency,
    select_eval_correct,
)
from .processor import run_audit

__all__ = [
    "ModeConsistencyReport",
    "attention_controllability",
    "bns_error",
    "generated_attention",
    "generated_diversity",
    "mode_consistency",
    "run_audit",
    "select_eval_correct",
]
