"""
Desk-scale data: procedural shapes, the CIFAR-10 binary reader, teacher pretraining.

图像统一归一化到 [−1, 1]，与 generator 的 tanh 输出范围一致。
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from acq_core.autodiff.rng import SeededRng
from acq_core.autodiff.tensor import Tensor, no_grad
from acq_core.config.settings import ShapesConfig
from acq_core.events import EventEmitter, TrainingEvent
from acq_core.nn.graph import LayerGraph, update_running_stats
from acq_core.nn.optim import SGD, step_lr
from acq_core.nn.zoo import build_target_net
from acq_core.utils.logger import info
from acq_pipeline.errors import DatasetFormatError, NonFiniteLossError
from acq_pipeline.processors.losses import ce_loss
from acq_pipeline.utils.pnm import image_to_ppm

SHAPE_NAMES = ("disk", "square", "cross", "triangle", "ring", "diamond", "hbar", "vbar", "saltire", "frame")

CIFAR_RECORD = 3073
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILES = ("test_batch.bin",)


@dataclass
class ImageDataset:
    images: np.ndarray  # N×C×H×W float32
    labels: np.ndarray  # N int64
    centroids: Optional[np.ndarray] = None  # N×2 (row, col) float64

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, index: np.ndarray) -> "ImageDataset":
        index = np.asarray(index, dtype=np.int64)
        cents = self.centroids[index] if self.centroids is not None else None
        return ImageDataset(self.images[index], self.labels[index], cents)

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield self.images[idx], self.labels[idx]


@dataclass
class ShapesDataset:
    config: ShapesConfig
    train: ImageDataset
    test: ImageDataset


# ── shapes ──


def _shape_mask(kind: str, rr: np.ndarray, cc: np.ndarray, r0: float, c0: float, radius: float) -> np.ndarray:
    dr, dc = rr - r0, cc - c0
    arm = max(1.0, radius / 3.0)
    if kind == "disk":
        return dr ** 2 + dc ** 2 <= radius ** 2
    if kind == "square":
        return (np.abs(dr) <= radius * 0.8) & (np.abs(dc) <= radius * 0.8)
    if kind == "cross":
        return ((np.abs(dr) <= arm) & (np.abs(dc) <= radius)) | ((np.abs(dc) <= arm) & (np.abs(dr) <= radius))
    if kind == "triangle":
        # apex up, base at r0 + radius·0.6
        height = dr + radius
        return (height >= 0) & (dr <= radius * 0.6) & (np.abs(dc) <= height * 0.6)
    if kind == "ring":
        d2 = dr ** 2 + dc ** 2
        return (d2 <= radius ** 2) & (d2 >= (radius * 0.55) ** 2)
    if kind == "diamond":
        return np.abs(dr) + np.abs(dc) <= radius
    if kind == "hbar":
        return (np.abs(dr) <= arm) & (np.abs(dc) <= radius)
    if kind == "vbar":
        return (np.abs(dc) <= arm) & (np.abs(dr) <= radius)
    if kind == "saltire":
        inside = (np.abs(dr) <= radius) & (np.abs(dc) <= radius)
        return inside & ((np.abs(dr - dc) <= arm) | (np.abs(dr + dc) <= arm))
    if kind == "frame":
        outer = (np.abs(dr) <= radius * 0.9) & (np.abs(dc) <= radius * 0.9)
        inner = (np.abs(dr) <= radius * 0.5) & (np.abs(dc) <= radius * 0.5)
        return outer & ~inner
    raise ValueError(f"unknown shape {kind!r}")


def _render_split(cfg: ShapesConfig, count: int, rng: SeededRng) -> ImageDataset:
    size = cfg.image_size
    scale = size / 32.0
    labels = np.arange(count, dtype=np.int64) % cfg.num_classes
    labels = labels[rng.child("order").permutation(count)]
    rr, cc = np.mgrid[0:size, 0:size].astype(np.float64)

    geometry = rng.child("geometry")
    color_rng = rng.child("color")
    noise_rng = rng.child("noise")
    images = np.empty((count, 3, size, size), dtype=np.float32)
    centroids = np.empty((count, 2), dtype=np.float64)
    for i, label in enumerate(labels):
        radius = float(geometry.uniform(5.0, 8.0, ())) * scale
        lo, hi = radius + 1.0, size - radius - 2.0
        r0, c0 = (float(v) for v in geometry.uniform(lo, hi, 2))
        mask = _shape_mask(SHAPE_NAMES[label], rr, cc, r0, c0, radius)
        color = color_rng.uniform(0.6, 1.0, 3).astype(np.float64)
        canvas = mask[None, :, :] * color[:, None, None]
        canvas = canvas + noise_rng.normal((3, size, size), std=cfg.noise_std)
        images[i] = (np.clip(canvas, 0.0, 1.0) * 2.0 - 1.0).astype(np.float32)
        ys, xs = np.nonzero(mask)
        centroids[i] = (ys.mean(), xs.mean())
    return ImageDataset(images, labels, centroids)


def generate_shapes(cfg: ShapesConfig) -> ShapesDataset:
    """Deterministic shapes dataset; one shape per image, class-balanced splits."""
    if cfg.num_classes > len(SHAPE_NAMES):
        raise ValueError(f"shapes dataset supports at most {len(SHAPE_NAMES)} classes, got {cfg.num_classes}")
    cfg.validate()
    rng = SeededRng(cfg.seed).child("shapes")
    train = _render_split(cfg, cfg.train_size, rng.child("train"))
    test = _render_split(cfg, cfg.test_size, rng.child("test"))
    return ShapesDataset(config=cfg, train=train, test=test)


# ── CIFAR-10 ──


def _read_cifar_file(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        offset = (raw.size // CIFAR_RECORD) * CIFAR_RECORD
        raise DatasetFormatError(f"{path.name}: truncated record, size {raw.size} is not a multiple of {CIFAR_RECORD}", offset)
    records = raw.reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise DatasetFormatError(f"{path.name}: label byte {labels[bad[0]]} outside [0, 9]", int(bad[0]) * CIFAR_RECORD)
    return records[:, 1:].reshape(-1, 3, 32, 32), labels


def read_cifar10(
    path: str | Path,
    split: str = "test",
    mean: Sequence[float] = (0.5, 0.5, 0.5),
    std: Sequence[float] = (0.5, 0.5, 0.5),
) -> ImageDataset:
    """Read CIFAR-10 binary batches; pixels → (p/255 − mean) / std per channel."""
    root = Path(path)
    names = {"train": CIFAR_TRAIN_FILES, "test": CIFAR_TEST_FILES}.get(split)
    if names is None:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    images: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for name in names:
        f = root / name
        if not f.exists():
            raise FileNotFoundError(f"CIFAR-10 batch not found: {f}")
        px, lb = _read_cifar_file(f)
        images.append(px)
        labels.append(lb)
    m = np.asarray(mean, dtype=np.float64).reshape(1, 3, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, 3, 1, 1)
    pixels = np.concatenate(images).astype(np.float64) / 255.0
    return ImageDataset(((pixels - m) / s).astype(np.float32), np.concatenate(labels))


# ── teacher pretraining ──


def evaluate_accuracy(graph: LayerGraph, data: ImageDataset, batch_size: int = 64, mode: str = "eval") -> float:
    """Top-1 accuracy; train mode drops a trailing batch smaller than 2."""
    if len(data) == 0:
        raise ValueError("evaluate_accuracy: empty dataset")
    correct = 0
    seen = 0
    with no_grad():
        for images, labels in data.batches(batch_size):
            if mode == "train" and len(labels) < 2:
                continue
            logits = graph.forward(Tensor(images), mode=mode, record_stats=False).logits
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
            seen += len(labels)
    return correct / max(seen, 1)


@dataclass
class PretrainOptions:
    spec: str = "tiny-resnet"
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    bn_momentum: float = 0.1
    width: int = 16
    seed: int = 0


def pretrain_teacher(
    dataset: ImageDataset,
    opts: PretrainOptions,
    emitter: Optional[EventEmitter] = None,
    run_id: str = "pretrain",
    eval_data: Optional[ImageDataset] = None,
) -> LayerGraph:
    """
    Train a target net with train-mode BN, EMA-updating stored statistics.

    The returned graph is in eval mode with parameters frozen.
    """
    num_classes = dataset.num_classes
    graph = build_target_net(opts.spec, num_classes=num_classes, width=opts.width, seed=opts.seed)
    opt = SGD(graph.parameters(), lr=opts.lr, momentum=opts.momentum, nesterov=True, weight_decay=opts.weight_decay)
    shuffle = SeededRng(opts.seed).child("pretrain:shuffle")
    emit = emitter.emit if emitter is not None else (lambda e: None)

    for epoch in range(opts.epochs):
        opt.lr = step_lr(opts.lr, epoch, opts.epochs, gamma=0.1, fraction=0.5)
        order = shuffle.permutation(len(dataset))
        total, batches = 0.0, 0
        for images, labels in dataset.batches(opts.batch_size, order):
            if len(labels) < 2:
                continue
            result = graph.forward(Tensor(images), mode="train")
            loss = ce_loss(result.logits, labels)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLossError("pretrain_ce", f"epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            update_running_stats(graph, result.stats, opts.bn_momentum)
            total += value
            batches += 1
        message = f"loss={total / max(batches, 1):.4f}"
        if eval_data is not None:
            message += f" test_acc={evaluate_accuracy(graph, eval_data):.4f}"
        emit(TrainingEvent(kind="epoch_done", run_id=run_id, phase="pretrain", data={"epoch": epoch, "message": message}))

    graph.mode = "eval"
    graph.freeze()
    info(f"pretrain_teacher: {opts.spec} trained for {opts.epochs} epochs ({graph.parameter_count()} parameters)")
    return graph


def export_dataset_images(data: ImageDataset, out_dir: str | Path, count: int = 16) -> List[Path]:
    """Write the first ``count`` images as PPM for inspection."""
    out_dir = Path(out_dir)
    return [
        image_to_ppm(out_dir / f"sample_{i:04d}_class{int(data.labels[i])}.ppm", data.images[i])
        for i in range(min(count, len(data)))
    ]
