"""
Data 模块

公共 API：
- generate_shapes(): 程序化 shapes 数据集（含 centroid 真值）
- read_cifar10(): CIFAR-10 二进制读取
- pretrain_teacher(): FP teacher 预训练（EMA BN 统计量）
- evaluate_accuracy(): top-1 准确率
"""
from .impl import (
    SHAPE_NAMES,
    ImageDataset,
    PretrainOptions,
    ShapesDataset,
    evaluate_accuracy,
    export_dataset_images,
    generate_shapes,
    pretrain_teacher,
    read_cifar10,
)
from .processor import dataset_descriptor, load_dataset, load_splits, run_pretrain

__all__ = [
    "SHAPE_NAMES",
    "ImageDataset",
    "PretrainOptions",
    "ShapesDataset",
    "evaluate_accuracy",
    "export_dataset_images",
    "generate_shapes",
    "pretrain_teacher",
    "dataset_descriptor",
    "load_dataset",
    "load_splits",
    "read_cifar10",
    "run_pretrain",
]
