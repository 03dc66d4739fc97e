"""
Loss terms for the generator and the quantized student.

Generator objective:
    total = ce_eval + ϵ₁·ce_train + α·(bns_eval + ϵ₂·bns_train)
          + β·(cacm + ϵ₃·cacm_penalty) + γ·adversarial
Student objective:
    CE(student, argmax teacher_eval) + τ·KL(teacher ‖ student)

All logs are natural-base.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Dict, Optional, Tuple

import numpy as np

from acq_core.autodiff import ops
from acq_core.autodiff.tensor import Tensor
from acq_core.config.settings import AblationSwitches, LossWeights
from acq_core.nn.graph import BatchStatsRecord, check_structure

LOG_FLOOR = 1e-12

PART_NAMES = (
    "ce_eval",
    "ce_train_penalty",
    "bns_eval",
    "bns_train_penalty",
    "cacm",
    "cacm_penalty",
    "adversarial",
)


def bns_loss(stats: BatchStatsRecord, stored: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> Tensor:
    """Σ_l ‖μ_l^s − μ_l‖² + ‖σ_l^s − σ_l‖²."""
    names = check_structure(stats, stored)
    if not names:
        raise ValueError("bns_loss: no BN layers recorded")
    total: Optional[Tensor] = None
    for name in names:
        mu, sigma = stored[name]
        term = ops.sum(ops.square(stats.means[name] - Tensor(mu))) + ops.sum(ops.square(stats.stds[name] - Tensor(sigma)))
        total = term if total is None else total + term
    return total


def _check_labels(op: str, logits: Tensor, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"{op}: expected N×C logits and N labels, got {logits.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"{op}: label out of range [0, {logits.shape[1]})")
    return labels


def ce_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Batch mean of −log softmax(logits)[label]."""
    labels = _check_labels("ce_loss", logits, labels)
    return -ops.mean(ops.gather(ops.log_softmax(logits, axis=1), labels))


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    x = x - x.max(axis=1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=1, keepdims=True)


def kd_loss(student_logits: Tensor, teacher_logits: Tensor) -> Tensor:
    """Batch mean of KL(softmax(teacher) ‖ softmax(student)); teacher is a constant target."""
    if student_logits.shape != teacher_logits.shape or student_logits.ndim != 2:
        raise ValueError(f"kd_loss: shape mismatch {student_logits.shape} vs {teacher_logits.shape}")
    pt = _softmax_np(teacher_logits.data)
    log_pt = np.log(np.clip(pt, LOG_FLOOR, None))
    kl_const = np.sum(pt * log_pt, axis=1)
    cross = ops.sum(Tensor(pt) * ops.log_softmax(student_logits, axis=1), axis=1)
    return ops.mean(Tensor(kl_const) - cross)


def _flat_maps(maps: Tensor) -> Tensor:
    if maps.ndim == 2:
        maps = ops.reshape(maps, (1,) + maps.shape)
    if maps.ndim != 3:
        raise ValueError(f"expected h×w or N×h×w attention maps, got {maps.shape}")
    n, h, w = maps.shape
    return ops.reshape(maps, (n, h * w))


def cacm_loss(maps: Tensor, p: np.ndarray, relax: float) -> Tensor:
    """Batch mean of −ln(min(M(row(p), col(p)) + ε₁, 1))."""
    flat = _flat_maps(maps)
    p = np.atleast_1d(np.asarray(p, dtype=np.int64))
    if p.shape != (flat.shape[0],):
        raise ValueError(f"cacm_loss: {flat.shape[0]} maps but positions of shape {p.shape}")
    if p.size and (p.min() < 0 or p.max() >= flat.shape[1]):
        raise ValueError(f"cacm_loss: position out of range [0, {flat.shape[1]})")
    if relax < 0:
        raise ValueError(f"cacm_loss: relax must be >= 0, got {relax}")
    # a minmax map is exactly 0 at its minimum cell
    v = ops.clip(ops.gather(flat, p) + relax, lo=LOG_FLOOR, hi=1.0)
    return -ops.mean(ops.log(v))


def js_divergence(y1: Tensor, y2: Tensor) -> Tensor:
    """Row-wise JS(y₁, y₂) = ½KL(y₁‖m) + ½KL(y₂‖m), m = (y₁+y₂)/2."""
    if y1.shape != y2.shape or y1.ndim != 2:
        raise ValueError(f"js_divergence: shape mismatch {y1.shape} vs {y2.shape}")
    m = (y1 + y2) * 0.5
    log_m = ops.log(ops.clip(m, lo=LOG_FLOOR))
    kl1 = ops.sum(y1 * (ops.log(ops.clip(y1, lo=LOG_FLOOR)) - log_m), axis=1)
    kl2 = ops.sum(y2 * (ops.log(ops.clip(y2, lo=LOG_FLOOR)) - log_m), axis=1)
    return (kl1 + kl2) * 0.5


def paired_diversity_ratio(z1: Tensor, z2: Tensor, y1: Tensor, y2: Tensor, guard: float) -> Tensor:
    """mean over pairs of MAE(z₁, z₂) / (JS(y₁, y₂) + guard)."""
    if z1.shape != z2.shape or z1.ndim != 2 or z1.shape[0] != y1.shape[0]:
        raise ValueError(f"adversarial: noise shapes {z1.shape} / {z2.shape} vs {y1.shape[0]} pairs")
    mae = ops.mean(ops.abs(z1 - z2), axis=1)
    return ops.mean(mae / (js_divergence(y1, y2) + guard))


def non_target_mask(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Mask removing {argmax t₁, argmax t₂} from each row."""
    n, c = t1.shape
    o1, o2 = np.argmax(t1, axis=1), np.argmax(t2, axis=1)
    mask = np.ones((n, c), dtype=bool)
    rows = np.arange(n)
    mask[rows, o1] = False
    mask[rows, o2] = False
    if np.any(mask.sum(axis=1) < 2):
        raise ValueError(f"adversarial_loss: fewer than 2 non-target classes remain (C={c})")
    return mask


def adversarial_loss(z1: Tensor, z2: Tensor, teacher_logits1: Tensor, teacher_logits2: Tensor, guard: float) -> Tensor:
    """Paired-sample adversarial loss on the non-target class distributions."""
    if teacher_logits1.shape != teacher_logits2.shape or teacher_logits1.ndim != 2:
        raise ValueError(f"adversarial_loss: shape mismatch {teacher_logits1.shape} vs {teacher_logits2.shape}")
    mask = non_target_mask(teacher_logits1.data, teacher_logits2.data)
    y1 = ops.softmax(teacher_logits1, axis=1, mask=mask)
    y2 = ops.softmax(teacher_logits2, axis=1, mask=mask)
    return paired_diversity_ratio(z1, z2, y1, y2, guard)


def cacm_penalty(map_train: Tensor, map_eval: Tensor, relax: float) -> Tensor:
    """Batch mean of max(MAE(M_train, M_eval) − ε₂, 0), MAE per sample."""
    a, b = _flat_maps(map_train), _flat_maps(map_eval)
    if a.shape != b.shape:
        raise ValueError(f"cacm_penalty: shape mismatch {map_train.shape} vs {map_eval.shape}")
    mae = ops.mean(ops.abs(a - b), axis=1)
    return ops.mean(ops.relu(mae - relax))


@dataclass
class GeneratorLossBreakdown:
    ce_eval: float = 0.0
    ce_train_penalty: float = 0.0
    bns_eval: float = 0.0
    bns_train_penalty: float = 0.0
    cacm: float = 0.0
    cacm_penalty: float = 0.0
    adversarial: float = 0.0
    total: float = 0.0
    loss: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def parts(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in PART_NAMES}

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "loss"}


def effective_weights(weights: LossWeights, switches: Optional[AblationSwitches] = None) -> Dict[str, float]:
    """Coefficient of each part in the total, with ablation switches applied."""
    sw = switches or AblationSwitches()
    pen = 1.0 if sw.penalty else 0.0
    return {
        "ce_eval": 1.0,
        "ce_train_penalty": weights.penalty_ce * pen,
        "bns_eval": weights.alpha,
        "bns_train_penalty": weights.alpha * weights.penalty_bns * pen,
        "cacm": weights.beta * (1.0 if sw.cacm else 0.0),
        "cacm_penalty": weights.beta * weights.penalty_cacm * pen,
        "adversarial": weights.gamma * (1.0 if sw.adversarial else 0.0),
    }


def recombine(parts: Dict[str, float], weights: LossWeights, switches: Optional[AblationSwitches] = None) -> float:
    coeff = effective_weights(weights, switches)
    return float(sum(coeff[k] * float(parts[k]) for k in PART_NAMES))


def generator_objective(
    parts: Dict[str, Tensor],
    weights: LossWeights,
    switches: Optional[AblationSwitches] = None,
) -> GeneratorLossBreakdown:
    """Weighted sum of the parts; parts with zero coefficient are reported but not backpropagated."""
    missing = set(PART_NAMES) - set(parts)
    if missing:
        raise ValueError(f"generator_objective: missing parts {sorted(missing)}")
    coeff = effective_weights(weights, switches)
    loss: Optional[Tensor] = None
    for name in PART_NAMES:
        if coeff[name] == 0.0:
            continue
        term = parts[name] * coeff[name]
        loss = term if loss is None else loss + term
    values = {name: parts[name].item() for name in PART_NAMES}
    return GeneratorLossBreakdown(**values, total=recombine(values, weights, switches), loss=loss)


def student_objective(student_logits: Tensor, teacher_logits: Tensor, weights: LossWeights) -> Tensor:
    """CE against the teacher's eval-mode argmax (not the condition label) + τ·KD."""
    if student_logits.shape != teacher_logits.shape:
        raise ValueError(f"student_objective: shape mismatch {student_logits.shape} vs {teacher_logits.shape}")
    target = np.argmax(teacher_logits.data, axis=1)
    loss = ce_loss(student_logits, target)
    if weights.tau:
        loss = loss + kd_loss(student_logits, teacher_logits) * weights.tau
    return loss
