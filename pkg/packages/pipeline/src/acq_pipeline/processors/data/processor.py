"""
Data Processor: 数据集描述 → 数据集；teacher 预训练（phase 层入口）

数据集描述（data.json）是一个小 JSON 对象：
    {"kind": "shapes", "shapes": {...ShapesConfig...}}
    {"kind": "cifar10", "path": "...", "mean": [...], "std": [...]}
shapes 数据集由 seed 完全确定，不落盘，按描述重新生成。
"""
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from acq_core.config.settings import ShapesConfig
from acq_core.events import EventEmitter
from acq_pipeline.archive import save_model

from .._types import ProcessorResult
from .impl import ImageDataset, PretrainOptions, evaluate_accuracy, generate_shapes, pretrain_teacher, read_cifar10

CIFAR_MEAN = (0.5, 0.5, 0.5)
CIFAR_STD = (0.5, 0.5, 0.5)


def dataset_descriptor(kind: str = "shapes", path: Optional[str] = None, shapes: Optional[ShapesConfig] = None) -> Dict[str, Any]:
    if kind == "shapes":
        return {"kind": "shapes", "shapes": (shapes or ShapesConfig()).to_dict()}
    if kind == "cifar10":
        if not path:
            raise ValueError("cifar10 dataset needs a path to the binary batches")
        return {"kind": "cifar10", "path": str(path), "mean": list(CIFAR_MEAN), "std": list(CIFAR_STD)}
    raise ValueError(f"unknown dataset kind {kind!r}; expected 'shapes' or 'cifar10'")


def load_dataset(descriptor: Dict[str, Any], split: str = "test") -> ImageDataset:
    """Materialize one split of a described dataset."""
    kind = descriptor.get("kind")
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    if kind == "shapes":
        data = generate_shapes(ShapesConfig.from_dict(descriptor.get("shapes", {})))
        return data.train if split == "train" else data.test
    if kind == "cifar10":
        return read_cifar10(
            descriptor["path"],
            split,
            descriptor.get("mean", CIFAR_MEAN),
            descriptor.get("std", CIFAR_STD),
        )
    raise ValueError(f"unknown dataset kind {kind!r}")


def load_splits(descriptor: Dict[str, Any]) -> Tuple[ImageDataset, ImageDataset]:
    if descriptor.get("kind") == "shapes":
        data = generate_shapes(ShapesConfig.from_dict(descriptor.get("shapes", {})))
        return data.train, data.test
    return load_dataset(descriptor, "train"), load_dataset(descriptor, "test")


def run_pretrain(
    descriptor: Dict[str, Any],
    opts: PretrainOptions,
    *,
    model_dir: Path,
    emitter: Optional[EventEmitter] = None,
    run_id: str = "pretrain",
) -> ProcessorResult:
    """
    预训练 teacher 并写出 archive。

    Returns:
        ProcessorResult:
        - outputs: ["model"]
        - metrics.test_accuracy: 测试集 top-1
    """
    train, test = load_splits(descriptor)
    teacher = pretrain_teacher(train, opts, emitter=emitter, run_id=run_id)
    accuracy = evaluate_accuracy(teacher, test)
    save_model(teacher, model_dir)
    return ProcessorResult(
        outputs=["model"],
        metrics={"test_accuracy": accuracy, "train_size": len(train), "test_size": len(test)},
    )
