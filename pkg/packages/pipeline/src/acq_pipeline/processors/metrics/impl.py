"""
Diagnostics: BNS error, eval/train mode consistency, attention controllability.

BNS error 定义为所有 (layer, channel) 上 |μ^s − μ| 与 |σ^s − σ| 合并后的平均绝对偏差。
只比较趋势，不追求与文献中的绝对数值一致。
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from acq_core.autodiff.rng import SeededRng
from acq_core.autodiff.tensor import Tensor, no_grad
from acq_core.nn.graph import BatchStatsRecord, LayerGraph, check_structure
from acq_pipeline.processors.attention import attention_diversity, attention_maps, centers_of, chebyshev
from acq_pipeline.processors.generator import ConditionSampler, GeneratorNet, generate

StatsLike = Union[BatchStatsRecord, Mapping[str, Tuple[np.ndarray, np.ndarray]]]


def _as_pairs(stats: StatsLike) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    if isinstance(stats, BatchStatsRecord):
        return stats.as_numpy()
    return dict(stats)


def bns_error(stats: StatsLike, stored: StatsLike) -> float:
    """Pooled mean of |μ^s − μ| and |σ^s − σ| over every BN layer and channel."""
    a, b = _as_pairs(stats), _as_pairs(stored)
    if isinstance(stats, BatchStatsRecord):
        names = check_structure(stats, b)
    else:
        if set(a) != set(b):
            raise ValueError(f"BN structure mismatch: {sorted(a)} vs {sorted(b)}")
        names = sorted(a)
    if not names:
        raise ValueError("bns_error: no BN layers")
    deviations = []
    for name in names:
        (mu_s, sd_s), (mu, sd) = a[name], b[name]
        if np.shape(mu_s) != np.shape(mu) or np.shape(sd_s) != np.shape(sd):
            raise ValueError(f"bns_error: {name} channel mismatch {np.shape(mu_s)} vs {np.shape(mu)}")
        deviations.append(np.abs(np.asarray(mu_s, np.float64) - np.asarray(mu, np.float64)).ravel())
        deviations.append(np.abs(np.asarray(sd_s, np.float64) - np.asarray(sd, np.float64)).ravel())
    return float(np.mean(np.concatenate(deviations)))


@dataclass
class ModeConsistencyReport:
    acc_eval: float
    acc_train: float
    bns_err_eval: float
    bns_err_train: float
    count: int
    attention_mae: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModeConsistencyReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


def select_eval_correct(teacher: LayerGraph, images: np.ndarray, labels: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Indices of samples the teacher classifies correctly in eval mode."""
    keep = []
    with no_grad():
        for start in range(0, len(labels), batch_size):
            x = Tensor(images[start:start + batch_size])
            pred = np.argmax(teacher.forward(x, mode="eval", record_stats=False).logits.data, axis=1)
            keep.append(np.flatnonzero(pred == labels[start:start + batch_size]) + start)
    return np.concatenate(keep).astype(np.int64) if keep else np.zeros(0, dtype=np.int64)


def mode_consistency(
    teacher: LayerGraph,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 16,
) -> ModeConsistencyReport:
    """
    Batched eval-mode vs train-mode forwards over the same samples.

    Only full batches are used; a trailing partial batch is dropped.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n < batch_size:
        raise ValueError(f"mode_consistency: need at least batch_size={batch_size} samples, got {n}")
    if teacher.backbone_tap is None:
        raise ValueError("mode_consistency: graph has no backbone tap")
    stored = teacher.stored_stats()
    batches = n // batch_size
    correct = {"eval": 0, "train": 0}
    errors = {"eval": [], "train": []}
    mae = []
    with no_grad():
        for i in range(batches):
            sl = slice(i * batch_size, (i + 1) * batch_size)
            x, y = Tensor(images[sl]), labels[sl]
            maps = {}
            for mode in ("eval", "train"):
                res = teacher.forward(x, mode=mode)
                correct[mode] += int(np.sum(np.argmax(res.logits.data, axis=1) == y))
                errors[mode].append(bns_error(res.stats, stored))
                maps[mode] = attention_maps(res.backbone).data.astype(np.float64)
            mae.append(np.abs(maps["eval"] - maps["train"]).mean(axis=(1, 2)))
    used = batches * batch_size
    return ModeConsistencyReport(
        acc_eval=correct["eval"] / used,
        acc_train=correct["train"] / used,
        bns_err_eval=float(np.mean(errors["eval"])),
        bns_err_train=float(np.mean(errors["train"])),
        count=used,
        attention_mae=float(np.mean(np.concatenate(mae))),
    )


def generated_attention(
    teacher: LayerGraph,
    generator: GeneratorNet,
    count: int,
    seed: int = 0,
    batch_size: int = 64,
) -> Dict[str, np.ndarray]:
    """
    Generate ``count`` samples with uniform (y, p) and return the teacher's eval-mode view.

    Returns images, y, p, maps (N×h×w) and predictions.
    """
    if count < 2:
        raise ValueError(f"generated_attention: count must be >= 2, got {count}")
    sampler = ConditionSampler(SeededRng(seed).child("diagnostics"))
    y, p = sampler.conditions(count, generator.num_classes, generator.grid_cells)
    images, maps, preds = [], [], []
    with no_grad():
        for idx in np.array_split(np.arange(count), max(1, -(-count // batch_size))):
            x = generate(generator, sampler.z(len(idx), generator.cfg.z_dim), y[idx], p[idx])
            res = teacher.forward(x, mode="eval", record_stats=False)
            images.append(x.data)
            maps.append(attention_maps(res.backbone).data)
            preds.append(np.argmax(res.logits.data, axis=1))
    maps_np = np.concatenate(maps)
    if maps_np.shape[1] * maps_np.shape[2] != generator.grid_cells:
        raise ValueError(
            f"teacher attention grid {maps_np.shape[1:]} does not match generator grid "
            f"{generator.cfg.grid}×{generator.cfg.grid}"
        )
    return {"images": np.concatenate(images), "y": y, "p": p, "maps": maps_np, "pred": np.concatenate(preds)}


def attention_controllability(
    teacher: LayerGraph,
    generator: GeneratorNet,
    count: int = 500,
    seed: int = 0,
    shuffle: bool = True,
    radius: int = 1,
) -> Dict[str, Any]:
    """Fraction of samples whose attention center lies within Chebyshev ``radius`` of p."""
    view = generated_attention(teacher, generator, count, seed)
    w = generator.cfg.grid
    centers = centers_of(view["maps"])
    out: Dict[str, Any] = {
        "count": count,
        "radius": radius,
        "within": float(np.mean(chebyshev(centers, view["p"], w) <= radius)),
        "exact": float(np.mean(centers == view["p"])),
        "label_agreement": float(np.mean(view["pred"] == view["y"])),
    }
    if shuffle:
        control = view["p"][SeededRng(seed).child("diagnostics:shuffle").permutation(count)]
        out["within_shuffled"] = float(np.mean(chebyshev(centers, control, w) <= radius))
    return out


def generated_diversity(teacher: LayerGraph, generator: GeneratorNet, count: int = 500, seed: int = 0) -> Dict[str, Any]:
    """Per-class attention diversity of generated samples (conditioned label as the class)."""
    view = generated_attention(teacher, generator, count, seed)
    return attention_diversity(view["maps"], view["y"])
