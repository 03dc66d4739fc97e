"""
Training 模块

公共 API：
- run(): phase 入口（训练 + 写 archive / report / metrics 流）
- run_acq(): warm-up 后交替训练 generator 与 quantized student
- train_step_generator() / warmup_calibrate() / train_step_student(): 单步操作
"""
from .impl import (
    AcqResult,
    RunState,
    init_run_state,
    observe_activations,
    run_acq,
    save_checkpoint,
    train_step_generator,
    train_step_student,
    warmup_calibrate,
)
from .processor import run

__all__ = [
    "AcqResult",
    "RunState",
    "init_run_state",
    "observe_activations",
    "run",
    "run_acq",
    "save_checkpoint",
    "train_step_generator",
    "train_step_student",
    "warmup_calibrate",
]
