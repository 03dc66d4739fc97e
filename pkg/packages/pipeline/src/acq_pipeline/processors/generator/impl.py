"""
Conditional generator G(z | y, p).

低维路径：i = (Emb_class(y) + z) ⊙ Emb_position(p) → linear stem → reshape。
高维路径：f = linear stem(Emb_class(y) + z)；P = label_smooth(one_hot(p)) 重排成 h×w；
f₁ = maxpool(f)、f₂ = avgpool(f) 到 h×w 后各经 1×1 conv 投影到 c₁ / c₂；
f′ = conv(concat[f₁, f₂, P])；𝓕 = upsample(f′) + f。
之后两条路径共用 body：BN → [upsample, conv, CCBN, leaky-relu]×2 → conv → tanh。
generator 的 BN 始终使用 batch 统计量（forward 固定为 train 模式）。
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from acq_core.autodiff import ops
from acq_core.autodiff.rng import SeededRng
from acq_core.autodiff.tensor import Tensor
from acq_core.config.settings import GeneratorConfig
from acq_core.nn.graph import LayerGraph
from acq_core.nn.layers import (
    BatchNorm2d,
    ClassConditionalBN,
    Conv2d,
    ForwardContext,
    Layer,
    LeakyReLU,
    Linear,
    Tanh,
    Upsample,
)


def _check_index(name: str, index: np.ndarray, extent: int, n: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.shape != (n,):
        raise ValueError(f"{name}: expected {n} entries, got shape {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= extent):
        raise ValueError(f"{name}: value out of range [0, {extent})")
    return index


def condition_fuse_lowdim(
    z: Tensor,
    y: np.ndarray,
    p: np.ndarray,
    class_table: Tensor,
    position_table: Tensor,
) -> Tensor:
    """i = (Emb_class(y) + z) ⊙ Emb_position(p), shape N×z_dim."""
    if z.ndim != 2 or z.shape[1] != class_table.shape[1] or position_table.shape[1] != z.shape[1]:
        raise ValueError(
            f"condition_fuse_lowdim: z {z.shape} vs class table {class_table.shape} / position table {position_table.shape}"
        )
    n = z.shape[0]
    y = _check_index("label", y, class_table.shape[0], n)
    p = _check_index("position", p, position_table.shape[0], n)
    return (ops.embedding(class_table, y) + z) * ops.embedding(position_table, p)


def position_grid(p: np.ndarray, h: int, w: int, smoothing: float) -> np.ndarray:
    """Label-smoothed one-hot over h·w cells, reshaped N×1×h×w. Each grid sums to 1."""
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    p = np.asarray(p, dtype=np.int64)
    cells = h * w
    if p.size and (p.min() < 0 or p.max() >= cells):
        raise ValueError(f"position out of range [0, {cells})")
    grid = np.full((p.shape[0], cells), smoothing / cells, dtype=np.float64)
    grid[np.arange(p.shape[0]), p] += 1.0 - smoothing
    return grid.reshape(p.shape[0], 1, h, w).astype(np.float32)


class ConditionHead(Layer):
    """Embeddings + linear stem + (high-dim) position fusion block."""

    kind = "condition_head"

    def __init__(self, cfg: GeneratorConfig, num_classes: int, rng: SeededRng):
        super().__init__()
        self.cfg = cfg
        self.num_classes = num_classes
        self.init_size = cfg.img_size // 4
        ch = cfg.channels
        self.add_child("stem", Linear(cfg.z_dim, ch * self.init_size ** 2, rng.child("stem")))
        if cfg.fusion == "lowdim":
            self.add_param("class_embedding", rng.child("class_embedding").normal((num_classes, cfg.z_dim)))
            self.add_param("position_embedding", rng.child("position_embedding").normal((cfg.grid * cfg.grid, cfg.z_dim)))
        else:
            if self.init_size % cfg.grid:
                raise ValueError(
                    f"high-dim fusion: stem feature {self.init_size}×{self.init_size} is not divisible "
                    f"into the {cfg.grid}×{cfg.grid} position grid"
                )
            c = cfg.fusion_channels or max(1, ch // 2)
            self.add_child("proj_max", Conv2d(ch, c, 1, rng.child("proj_max"), bias=True))
            self.add_child("proj_avg", Conv2d(ch, c, 1, rng.child("proj_avg"), bias=True))
            self.add_child("fuse", Conv2d(2 * c + 1, ch, 3, rng.child("fuse"), padding=1, bias=True))

    @property
    def class_table(self) -> Tensor:
        return self._params["class_embedding"]

    @property
    def position_table(self) -> Tensor:
        return self._params["position_embedding"]

    def stem_features(self, i: Tensor, ctx: ForwardContext) -> Tensor:
        s = self.init_size
        return ops.reshape(self._children["stem"](i, ctx), (i.shape[0], self.cfg.channels, s, s))

    def fuse_highdim(self, z: Tensor, p: np.ndarray, ctx: ForwardContext) -> Tensor:
        """f = stem(z); 𝓕 = Up(conv([proj(maxpool f), proj(avgpool f), P])) + f."""
        g = self.cfg.grid
        f = self.stem_features(z, ctx)
        P = Tensor(position_grid(p, g, g, self.cfg.smoothing))
        f1 = self._children["proj_max"](ops.adaptive_max_pool2d(f, g, g), ctx)
        f2 = self._children["proj_avg"](ops.adaptive_avg_pool2d(f, g, g), ctx)
        f_prime = self._children["fuse"](ops.concat([f1, f2, P], axis=1), ctx)
        return ops.upsample_nearest(f_prime, self.init_size // g) + f

    def forward(self, z: Tensor, ctx: ForwardContext) -> Tensor:
        if ctx.labels is None or ctx.positions is None:
            raise ValueError("generator forward needs labels and positions")
        if z.ndim != 2 or z.shape[1] != self.cfg.z_dim:
            raise ValueError(f"generator: z must be N×{self.cfg.z_dim}, got {z.shape}")
        n = z.shape[0]
        y = _check_index("label", ctx.labels, self.num_classes, n)
        p = _check_index("position", ctx.positions, self.cfg.grid ** 2, n)
        if self.cfg.fusion == "lowdim":
            i = condition_fuse_lowdim(z, y, p, self.class_table, self.position_table)
            return self.stem_features(i, ctx)
        # the label reaches the high-dim path only through the class-conditional BN layers
        return self.fuse_highdim(z, p, ctx)


class GeneratorNet(LayerGraph):
    """LayerGraph whose input is z and whose forward also takes (y, p)."""

    def __init__(self, layers: List[Tuple[str, Layer]], cfg: GeneratorConfig, num_classes: int, seed: int):
        arch: Dict[str, Any] = {
            "kind": "generator",
            "config": cfg.to_dict(),
            "num_classes": num_classes,
            "seed": seed,
        }
        super().__init__(layers, backbone_tap=None, arch=arch, mode="train")
        self.cfg = cfg
        self.num_classes = num_classes

    @property
    def head(self) -> ConditionHead:
        return self.top_level["head"]

    @property
    def grid_cells(self) -> int:
        return self.cfg.grid ** 2


def build_generator(cfg: GeneratorConfig, num_classes: int, seed: int = 0) -> GeneratorNet:
    cfg.validate()
    rng = SeededRng(seed).child("init:generator")
    ch = cfg.channels
    half = max(1, ch // 2)
    layers: List[Tuple[str, Layer]] = [
        ("head", ConditionHead(cfg, num_classes, rng.child("head"))),
        ("bn0", BatchNorm2d(ch)),
        ("up1", Upsample(2)),
        ("conv1", Conv2d(ch, ch, 3, rng.child("conv1"), padding=1, bias=True)),
        ("ccbn1", ClassConditionalBN(ch, num_classes)),
        ("act1", LeakyReLU(cfg.leaky_slope)),
        ("up2", Upsample(2)),
        ("conv2", Conv2d(ch, half, 3, rng.child("conv2"), padding=1, bias=True)),
        ("ccbn2", ClassConditionalBN(half, num_classes)),
        ("act2", LeakyReLU(cfg.leaky_slope)),
        ("conv3", Conv2d(half, cfg.img_channels, 3, rng.child("conv3"), padding=1, bias=True)),
        ("tanh", Tanh()),
    ]
    return GeneratorNet(layers, cfg, num_classes, seed)


def rebuild_generator(arch: Dict[str, Any]) -> GeneratorNet:
    return build_generator(GeneratorConfig.from_dict(arch["config"]), int(arch["num_classes"]), int(arch.get("seed", 0)))


def generate(gen: GeneratorNet, z: Tensor, y: np.ndarray, p: np.ndarray) -> Tensor:
    """Synthetic batch N×C×H×W in [−1, 1]."""
    return gen.forward(z, mode="train", labels=y, positions=p, record_stats=False).logits


class ConditionSampler:
    """
    Persistent draw streams for noise, labels and positions.

    y ∼ U(0, C) and p ∼ U(0, h·w) are drawn per sample; z ∼ N(0, 1).
    """

    def __init__(self, rng: SeededRng):
        self.noise = rng.child("noise")
        self.labels = rng.child("labels")
        self.positions = rng.child("positions")

    def conditions(self, n: int, num_classes: int, cells: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.labels.integers(0, num_classes, n), self.positions.integers(0, cells, n)

    def z(self, n: int, z_dim: int) -> Tensor:
        return Tensor(self.noise.normal((n, z_dim)))

    def batch(
        self,
        gen: GeneratorNet,
        n: int,
        y: Optional[np.ndarray] = None,
        p: Optional[np.ndarray] = None,
    ) -> Tuple[Tensor, np.ndarray, np.ndarray, Tensor]:
        """Draw (z, y, p) and generate; returns (x, y, p, z)."""
        if y is None or p is None:
            y_draw, p_draw = self.conditions(n, gen.num_classes, gen.grid_cells)
            y = y_draw if y is None else y
            p = p_draw if p is None else p
        z = self.z(n, gen.cfg.z_dim)
        return generate(gen, z, y, p), np.asarray(y), np.asarray(p), z
