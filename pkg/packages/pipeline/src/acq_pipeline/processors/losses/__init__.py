"""
Losses 模块

公共 API：
- bns_loss / ce_loss / kd_loss: 基础损失
- cacm_loss / cacm_penalty: attention center 匹配与 eval/train 一致性
- adversarial_loss / js_divergence: 成对样本对抗损失
- generator_objective / student_objective: 组合目标
"""
from .impl import (
    PART_NAMES,
    GeneratorLossBreakdown,
    adversarial_loss,
    bns_loss,
    cacm_loss,
    cacm_penalty,
    ce_loss,
    effective_weights,
    generator_objective,
    js_divergence,
    kd_loss,
    non_target_mask,
    paired_diversity_ratio,
    recombine,
    student_objective,
)

__all__ = [
    "PART_NAMES",
    "GeneratorLossBreakdown",
    "adversarial_loss",
    "bns_loss",
    "cacm_loss",
    "cacm_penalty",
    "ce_loss",
    "effective_weights",
    "generator_objective",
    "js_divergence",
    "kd_loss",
    "non_target_mask",
    "paired_diversity_ratio",
    "recombine",
    "student_objective",
]
