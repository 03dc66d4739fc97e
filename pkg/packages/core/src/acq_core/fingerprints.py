"""
Fingerprint 计算：确定性 hash

所有 hash 都是 ``"sha256:<hex>"``。config fingerprint 走 canonicalize_json，
archive / BN 统计量走 hash_arrays。
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Tuple

import numpy as np

_EMPTY = (None, {}, [])


def _plain(obj: Any) -> Any:
    """
    转成可稳定序列化的普通 JSON 值：

    - numpy 标量 / 数组 → Python 数 / 嵌套 list；tuple → list；Path → str
    - 递归丢掉 None 与空 dict / list（缺省与显式 null 得到同一个 fingerprint）
    """
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, dict):
        items = ((str(k), _plain(v)) for k, v in obj.items())
        return {k: v for k, v in items if not any(v is e or v == e for e in _EMPTY)}
    if isinstance(obj, (list, tuple)):
        items = (_plain(v) for v in obj)
        return [v for v in items if not any(v is e or v == e for e in _EMPTY)]
    return obj


def canonicalize_json(obj: Any) -> str:
    """排序 key、紧凑分隔符；NaN / inf 直接报错。"""
    return json.dumps(_plain(obj), sort_keys=True, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def _digest(h) -> str:
    return f"sha256:{h.hexdigest()}"


def hash_json(obj: Any) -> str:
    return _digest(hashlib.sha256(canonicalize_json(obj).encode("utf-8")))


def hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return _digest(h)


def hash_arrays(named: Iterable[Tuple[str, np.ndarray]]) -> str:
    """
    一组命名数组的 hash：名字、shape、dtype 与原始字节都参与。

    用于 teacher BN 统计量不可变性检查与 archive digest。
    """
    h = hashlib.sha256()
    for name, arr in named:
        arr = np.ascontiguousarray(arr)
        for part in (name, str(arr.shape), arr.dtype.str):
            h.update(part.encode("utf-8"))
        h.update(arr.tobytes())
    return _digest(h)
