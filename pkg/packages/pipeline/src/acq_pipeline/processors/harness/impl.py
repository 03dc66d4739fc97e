"""
Sweep / ablation harness: repeated run_acq over parameter values or component toggles.

每个 (row, seed) 一个 job，job 之间互不共享可变状态（teacher 各自 clone）；
结果按输入顺序汇总，与 worker 数无关。
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from acq_core.config.settings import AblationSwitches, LossWeights, TrainConfig, get_default_workers
from acq_core.nn.graph import LayerGraph
from acq_core.utils.logger import info
from acq_pipeline.processors.data import ImageDataset
from acq_pipeline.processors.training import run_acq

# component toggle rows: none (generator baseline), each single component, all
ABLATION_ROWS: Tuple[Tuple[str, AblationSwitches], ...] = (
    ("none", AblationSwitches(cacm=False, adversarial=False, penalty=False)),
    ("cacm", AblationSwitches(cacm=True, adversarial=False, penalty=False)),
    ("cacm+ad", AblationSwitches(cacm=True, adversarial=True, penalty=False)),
    ("penalty", AblationSwitches(cacm=False, adversarial=False, penalty=True)),
    ("all", AblationSwitches(cacm=True, adversarial=True, penalty=True)),
)

COMPONENTS = ("cacm", "ad", "penalty")

RunFn = Callable[[TrainConfig, LayerGraph, Optional[ImageDataset]], Dict[str, Any]]


def _default_run(cfg: TrainConfig, teacher: LayerGraph, eval_data: Optional[ImageDataset]) -> Dict[str, Any]:
    return run_acq(cfg, teacher, eval_data=eval_data, run_id=f"{cfg.switches.label()}:{cfg.seed}", diagnostic_count=0).report


def resolve_param(param: str) -> str:
    """Short loss-weight names map to ``weights.<name>``; dotted keys pass through."""
    if "." in param:
        return param
    if param in LossWeights.__dataclass_fields__:
        return f"weights.{param}"
    if param in TrainConfig.__dataclass_fields__:
        return param
    raise ValueError(f"unknown sweep parameter {param!r}")


def _run_jobs(
    jobs: Sequence[TrainConfig],
    teacher: LayerGraph,
    eval_data: Optional[ImageDataset],
    workers: Optional[int],
    run_fn: RunFn,
) -> List[Dict[str, Any]]:
    workers = max(1, workers or get_default_workers())

    def one(cfg: TrainConfig) -> Dict[str, Any]:
        return run_fn(cfg, teacher.clone(), eval_data)

    if workers == 1 or len(jobs) == 1:
        return [one(cfg) for cfg in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


def _summarize(reports: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    acc = [r.get("final_student_accuracy") for r in reports]
    known = [a for a in acc if a is not None]
    return {
        "accuracies": acc,
        "mean": float(np.mean(known)) if known else None,
        "std": float(np.std(known)) if known else None,
    }


def sweep(
    cfg: TrainConfig,
    teacher: LayerGraph,
    param: str,
    values: Sequence[float],
    seeds: Sequence[int] = (0,),
    eval_data: Optional[ImageDataset] = None,
    workers: Optional[int] = None,
    run_fn: RunFn = _default_run,
) -> Dict[str, Any]:
    """One row per value: final student accuracy per seed and mean ± std."""
    if not values:
        raise ValueError("sweep: no values given")
    key = resolve_param(param)
    jobs = [cfg.with_overrides({key: v, "seed": s}) for v in values for s in seeds]
    for job in jobs:
        job.validate()
    info(f"sweep: {key} over {list(values)} × seeds {list(seeds)} ({len(jobs)} runs)")
    reports = _run_jobs(jobs, teacher, eval_data, workers, run_fn)
    k = len(seeds)
    rows = [
        {"value": v, "seeds": list(seeds), **_summarize(reports[i * k:(i + 1) * k])}
        for i, v in enumerate(values)
    ]
    return {"param": key, "rows": rows}


def parse_components(text: Optional[str]) -> Tuple[str, ...]:
    """'cacm,ad,penalty' → components; empty or None → all."""
    if not text:
        return COMPONENTS
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    unknown = [p for p in parts if p not in COMPONENTS]
    if unknown:
        raise ValueError(f"unknown ablation components {unknown}; known: {', '.join(COMPONENTS)}")
    return parts


def ablation_rows(components: Sequence[str] = COMPONENTS) -> List[Tuple[str, AblationSwitches]]:
    """Rows whose enabled components are all in ``components`` (the baseline row is always kept)."""
    allowed = set(components)
    rows = []
    for label, sw in ABLATION_ROWS:
        on = {"cacm": sw.cacm, "ad": sw.adversarial, "penalty": sw.penalty}
        if all(c in allowed for c, flag in on.items() if flag):
            rows.append((label, sw))
    return rows


def ablation_harness(
    cfg: TrainConfig,
    teacher: LayerGraph,
    components: Sequence[str] = COMPONENTS,
    seeds: Sequence[int] = (0, 1, 2),
    eval_data: Optional[ImageDataset] = None,
    workers: Optional[int] = None,
    run_fn: RunFn = _default_run,
) -> Dict[str, Any]:
    """Mean ± std final accuracy for each component combination, baseline first."""
    rows = ablation_rows(components)
    jobs = []
    for _, sw in rows:
        for s in seeds:
            job = TrainConfig.from_dict({**cfg.to_dict(), "seed": s, "switches": sw.to_dict()})
            jobs.append(job)
    info(f"ablation: {len(rows)} rows × {len(seeds)} seeds")
    reports = _run_jobs(jobs, teacher, eval_data, workers, run_fn)
    k = len(seeds)
    table = []
    for i, (label, sw) in enumerate(rows):
        table.append({"row": label, "switches": sw.to_dict(), **_summarize(reports[i * k:(i + 1) * k])})
    return {"rows": table, "seeds": list(seeds)}
