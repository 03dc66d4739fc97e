"""Configuration and settings"""
from pathlib import Path
from typing import Any, Dict, Optional

from acq_core.resources import load_json_resource
from acq_core.config.settings import TrainConfig, LossWeights, load_config_file


def load_profiles() -> dict:
    """读取内置 profiles。{"loss": {...}, "schedule": {...}}"""
    return load_json_resource("profiles.json")


def loss_profile(name: str) -> LossWeights:
    """Loss coefficients for a dataset profile (cifar10 / cifar100 / imagenet / mobilenetv2)."""
    table = load_profiles()["loss"]
    if name not in table:
        raise ValueError(f"Unknown loss profile {name!r}; known: {sorted(table)}")
    return LossWeights(**table[name])


def schedule_profile(name: str) -> Dict[str, Any]:
    table = load_profiles()["schedule"]
    if name not in table:
        raise ValueError(f"Unknown schedule profile {name!r}; known: {sorted(table)}")
    return dict(table[name])


def merge_train_config(cfg: TrainConfig, data: Dict[str, Any]) -> TrainConfig:
    """Overlay a (partial) TrainConfig document; nested sections merge key by key."""
    merged = cfg.to_dict()
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return TrainConfig.from_dict(merged)


def resolve_train_config(
    profile: str = "desk",
    loss: str = "cifar10",
    path: Optional[str | Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> TrainConfig:
    """
    组装 TrainConfig：schedule profile → loss profile → 配置文件 → CLI 覆盖。

    后面的来源覆盖前面的。
    """
    cfg = TrainConfig(**schedule_profile(profile), weights=loss_profile(loss))
    if path is not None:
        cfg = merge_train_config(cfg, load_config_file(path))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    cfg.validate()
    return cfg
