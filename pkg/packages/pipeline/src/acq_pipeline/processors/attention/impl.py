"""
Attention maps: M = minmax(Σ_c A_c²) per sample, center = row-major-first argmax.

位置编号约定：p = row · w + col，row = ⌊p / w⌋，col = p mod w（h ≠ w 时同样成立）。
常数输入归一化为全零，center 为 (0, 0)。
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from acq_core.autodiff import ops
from acq_core.autodiff.tensor import Tensor
from acq_pipeline.utils.pnm import to_uint8, write_pgm


@dataclass
class AttentionMap:
    M: np.ndarray  # h×w in [0, 1]
    center: Tuple[int, int]
    mode: str = "eval"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.M.shape


def attention_maps(A: Tensor) -> Tensor:
    """Differentiable N×c×h×w → N×h×w maps in [0, 1]."""
    if A.ndim != 4:
        raise ValueError(f"attention_maps: expected N×c×h×w, got {A.shape}")
    n, c, h, w = A.shape
    if h == 0 or w == 0:
        raise ValueError(f"attention_maps: empty spatial dims {h}×{w}")
    energy = ops.sum(ops.square(A), axis=1)
    lo = ops.amin(energy, axis=(1, 2), keepdims=True)
    hi = ops.amax(energy, axis=(1, 2), keepdims=True)
    span = hi - lo
    # constant maps: numerator is 0, keep the denominator at 1
    flat = Tensor((span.data == 0).astype(np.float32))
    return (energy - lo) / (span + flat)


def map_center(M: np.ndarray) -> Tuple[int, int]:
    idx = int(np.argmax(M.reshape(-1)))
    return idx // M.shape[1], idx % M.shape[1]


def attention_matrix(A: Union[Tensor, np.ndarray], mode: str = "eval") -> Union[AttentionMap, List[AttentionMap]]:
    """c×h×w → one AttentionMap; N×c×h×w → a list of per-sample maps."""
    t = A if isinstance(A, Tensor) else Tensor(A)
    single = t.ndim == 3
    if single:
        t = ops.reshape(t, (1,) + t.shape)
    if t.ndim != 4:
        raise ValueError(f"attention_matrix: expected c×h×w or N×c×h×w, got {t.shape}")
    data = attention_maps(t.detach()).data
    maps = [AttentionMap(M=m.copy(), center=map_center(m), mode=mode) for m in data]
    return maps[0] if single else maps


def centers_of(maps: np.ndarray) -> np.ndarray:
    """N×h×w → N flat center indices p."""
    n = maps.shape[0]
    return np.argmax(maps.reshape(n, -1), axis=1).astype(np.int64)


def position_index(center: Tuple[int, int], w: int, h: Optional[int] = None) -> int:
    """(row, col) → p = row·w + col; with ``h`` the row is bounded too."""
    row, col = int(center[0]), int(center[1])
    if row < 0 or not 0 <= col < w:
        raise ValueError(f"position_index: cell {center} outside width {w}")
    if h is not None and row >= h:
        raise ValueError(f"position_index: cell {center} outside height {h}")
    return row * w + col


def p_to_cell(p: int, h: int, w: int) -> Tuple[int, int]:
    p = int(p)
    if not 0 <= p < h * w:
        raise ValueError(f"p_to_cell: position {p} out of range [0, {h * w})")
    return p // w, p % w


def chebyshev(p: np.ndarray, q: np.ndarray, w: int) -> np.ndarray:
    """Chebyshev distance between flat grid indices."""
    p, q = np.asarray(p), np.asarray(q)
    return np.maximum(np.abs(p // w - q // w), np.abs(p % w - q % w))


def map_distance(a: Union[AttentionMap, np.ndarray], b: Union[AttentionMap, np.ndarray]) -> float:
    """Mean absolute elementwise difference."""
    ma = a.M if isinstance(a, AttentionMap) else np.asarray(a)
    mb = b.M if isinstance(b, AttentionMap) else np.asarray(b)
    if ma.shape != mb.shape:
        raise ValueError(f"map_distance: shape mismatch {ma.shape} vs {mb.shape}")
    return float(np.mean(np.abs(ma.astype(np.float64) - mb.astype(np.float64))))


def upscale_nearest(M: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = M.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return M[rows][:, cols]


def export_heatmap(amap: Union[AttentionMap, np.ndarray], out_h: int, out_w: int, path: Union[str, Path]) -> Path:
    """Nearest-neighbor upscale to out_h×out_w and write an 8-bit P2 PGM."""
    M = amap.M if isinstance(amap, AttentionMap) else np.asarray(amap)
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"export_heatmap: invalid output size {out_h}×{out_w}")
    return write_pgm(path, to_uint8(upscale_nearest(M, out_h, out_w)))


def export_mode_pair(
    eval_map: AttentionMap,
    train_map: AttentionMap,
    out_h: int,
    out_w: int,
    path: Union[str, Path],
    gap: int = 2,
) -> Path:
    """Eval map | gap | train map, side by side in one PGM."""
    left = upscale_nearest(eval_map.M, out_h, out_w)
    right = upscale_nearest(train_map.M, out_h, out_w)
    spacer = np.ones((out_h, gap), dtype=np.float64)
    return write_pgm(path, to_uint8(np.concatenate([left, spacer, right], axis=1)))


def attention_diversity(maps: np.ndarray, labels: np.ndarray) -> Dict[str, Dict[str, float]]:
    """
    Per class: number of distinct attention centers and mean pairwise map MAE.

    Low values mean within-class attention has homogenized.
    """
    maps = np.asarray(maps, dtype=np.float64)
    labels = np.asarray(labels)
    if maps.ndim != 3 or labels.shape != (maps.shape[0],):
        raise ValueError(f"attention_diversity: expected N×h×w maps and N labels, got {maps.shape}, {labels.shape}")
    centers = centers_of(maps)
    out: Dict[str, Dict[str, float]] = {}
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        group = maps[idx].reshape(len(idx), -1)
        if len(idx) > 1:
            diffs = np.abs(group[:, None, :] - group[None, :, :]).mean(axis=2)
            iu = np.triu_indices(len(idx), k=1)
            pairwise = float(diffs[iu].mean())
        else:
            pairwise = 0.0
        out[str(int(cls))] = {
            "count": int(len(idx)),
            "distinct_centers": int(len(np.unique(centers[idx]))),
            "mean_pairwise_mae": pairwise,
        }
    return out
