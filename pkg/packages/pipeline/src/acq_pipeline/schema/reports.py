"""
Schema: JSON reports written by training, audit, eval, sweep and ablation.

Reports are plain dicts serialized with ``sort_keys=True`` and no timestamps,
so two runs with the same seed produce identical bytes.

Required fields per kind (value type in brackets; ``?`` = may be null):
- train:    seed [int], bits [str], switches [str], config_fingerprint [str], iterations [int],
            fp_accuracy [float?], initial_student_accuracy [float?], final_student_accuracy [float?],
            final_losses [dict], epoch_losses [list], teacher_digest [dict],
            controllability [dict?], diversity [dict?]
- audit:    acc_eval, acc_train, bns_err_eval, bns_err_train, attention_mae [float], count [int]
- eval:     accuracy [float], count [int]
- sweep:    param [str], rows [list]
- ablation: rows [list], seeds [list]
"""
from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np


class ReportKind(str, Enum):
    TRAIN = "train"
    AUDIT = "audit"
    EVAL = "eval"
    SWEEP = "sweep"
    ABLATION = "ablation"


_NUM = (int, float)

# field → (accepted types, nullable)
_FIELDS: Dict[str, Dict[str, Tuple[tuple, bool]]] = {
    ReportKind.TRAIN: {
        "seed": ((int,), False),
        "bits": ((str,), False),
        "switches": ((str,), False),
        "config_fingerprint": ((str,), False),
        "iterations": ((int,), False),
        "fp_accuracy": (_NUM, True),
        "initial_student_accuracy": (_NUM, True),
        "final_student_accuracy": (_NUM, True),
        "final_losses": ((dict,), False),
        "epoch_losses": ((list,), False),
        "teacher_digest": ((dict,), False),
        "controllability": ((dict,), True),
        "diversity": ((dict,), True),
    },
    ReportKind.AUDIT: {
        "acc_eval": (_NUM, False),
        "acc_train": (_NUM, False),
        "bns_err_eval": (_NUM, False),
        "bns_err_train": (_NUM, False),
        "attention_mae": (_NUM, False),
        "count": ((int,), False),
    },
    ReportKind.EVAL: {
        "accuracy": (_NUM, False),
        "count": ((int,), False),
    },
    ReportKind.SWEEP: {
        "param": ((str,), False),
        "rows": ((list,), False),
    },
    ReportKind.ABLATION: {
        "rows": ((list,), False),
        "seeds": ((list,), False),
    },
}

REPORT_KINDS = tuple(k.value for k in ReportKind)

_FRACTIONS = ("fp_accuracy", "initial_student_accuracy", "final_student_accuracy", "acc_eval", "acc_train", "accuracy")


def validate_report(kind: Union[str, ReportKind], data: Dict[str, Any]) -> None:
    """Raise ValueError naming the first missing or mistyped field."""
    try:
        kind = ReportKind(kind)
    except ValueError:
        raise ValueError(f"unknown report kind {kind!r}; known: {', '.join(REPORT_KINDS)}") from None
    if not isinstance(data, dict):
        raise ValueError(f"{kind.value} report must be a JSON object")
    for name, (types, nullable) in _FIELDS[kind].items():
        if name not in data:
            raise ValueError(f"{kind.value} report: missing field '{name}'")
        value = data[name]
        if value is None:
            if not nullable:
                raise ValueError(f"{kind.value} report: field '{name}' must not be null")
            continue
        if isinstance(value, bool) or not isinstance(value, types):
            raise ValueError(f"{kind.value} report: field '{name}' has type {type(value).__name__}")
    for name in _FRACTIONS:
        value = data.get(name)
        if value is not None and not 0.0 <= float(value) <= 1.0:
            raise ValueError(f"{kind.value} report: '{name}' = {value} outside [0, 1]")


def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps_report(data: Dict[str, Any]) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def write_report(path: Union[str, Path], kind: Union[str, ReportKind], data: Dict[str, Any]) -> Path:
    """Validate, then write deterministic JSON."""
    # numpy scalars → builtins
    data = json.loads(dumps_report(data))
    validate_report(kind, data)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(data), encoding="utf-8")
    return path


def load_report(path: Union[str, Path], kind: Union[str, ReportKind, None] = None) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Report not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if kind is not None:
        validate_report(kind, data)
    return data
