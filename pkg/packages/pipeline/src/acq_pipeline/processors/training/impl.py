"""
Alternating generator / student optimization with a warm-up calibration phase.

每个 iteration：
1. generator step：同一组 (y, p) 下抽两组噪声 z₁, z₂，teacher 分别以 eval / train 模式
   前向合并后的 batch，计算各 loss 分量并只更新 G；
2. warm-up 期间：quantized student 前向刚生成的样本，更新激活 observer；
   warm-up 结束时冻结全部激活 quantizer；
3. 之后：student step（CE + τ·KD），student 的存储 BN 统计量始终不变。

学习率按 epoch 阶梯衰减；teacher digest 每个 epoch 检查一次。
"""
from __future__ import annotations

from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from acq_core.autodiff import ops
from acq_core.autodiff.rng import SeededRng
from acq_core.autodiff.tensor import Tensor, no_grad
from acq_core.config.settings import TrainConfig
from acq_core.events import EventEmitter, TrainingEvent
from acq_core.fingerprints import hash_json
from acq_core.nn.graph import LayerGraph, bn_digest
from acq_core.nn.optim import SGD, Adam, step_lr
from acq_core.utils.logger import info
from acq_pipeline.archive import save_model
from acq_pipeline.errors import NonFiniteLossError
from acq_pipeline.processors.attention import attention_maps
from acq_pipeline.processors.data import ImageDataset, evaluate_accuracy
from acq_pipeline.processors.generator import ConditionSampler, GeneratorNet, build_generator, generate
from acq_pipeline.processors.losses import (
    PART_NAMES,
    GeneratorLossBreakdown,
    adversarial_loss,
    bns_loss,
    cacm_loss,
    cacm_penalty,
    ce_loss,
    effective_weights,
    generator_objective,
    student_objective,
)
from acq_pipeline.processors.metrics import attention_controllability, generated_diversity
from acq_pipeline.processors.quantizer import all_frozen, freeze_activations, quantize_graph


@dataclass
class RunState:
    """Mutable training state; the teacher is shared read-only."""
    teacher: LayerGraph
    generator: GeneratorNet
    student: LayerGraph
    gen_opt: Adam
    student_opt: SGD
    sampler: ConditionSampler
    teacher_digest: str
    run_id: str = "acq"
    emitter: Optional[EventEmitter] = None
    t: int = 0
    epoch: int = 0
    history: List[Dict[str, Any]] = field(default_factory=list)
    last_samples: Optional[Tensor] = None
    last_breakdown: Optional[GeneratorLossBreakdown] = None
    last_student_loss: Optional[float] = None

    def emit(self, kind: str, phase: str, data: Dict[str, Any]) -> None:
        if self.emitter is not None:
            self.emitter.emit(TrainingEvent(kind=kind, run_id=self.run_id, phase=phase, data=data))


def teacher_num_classes(teacher: LayerGraph) -> int:
    num_classes = teacher.arch.get("num_classes")
    if num_classes is None:
        raise ValueError("teacher arch does not record num_classes")
    return int(num_classes)


def init_run_state(
    cfg: TrainConfig,
    teacher: LayerGraph,
    emitter: Optional[EventEmitter] = None,
    run_id: str = "acq",
) -> RunState:
    """Build generator, quantized student, optimizers and the sampling streams from ``cfg.seed``."""
    cfg.validate()
    if teacher.backbone_tap is None:
        raise ValueError("teacher has no backbone tap; attention maps need one")
    teacher.freeze()
    teacher.mode = "eval"
    generator = build_generator(cfg.generator, teacher_num_classes(teacher), seed=cfg.seed)
    student = quantize_graph(teacher, cfg.n_w, cfg.n_a, cfg.quantize_first_last)
    gen_opt = Adam(generator.parameters(), lr=cfg.gen_lr, betas=tuple(cfg.gen_betas))
    student_opt = SGD(
        student.parameters(),
        lr=cfg.student_lr,
        momentum=cfg.student_momentum,
        nesterov=cfg.student_nesterov,
        weight_decay=cfg.student_weight_decay,
    )
    return RunState(
        teacher=teacher,
        generator=generator,
        student=student,
        gen_opt=gen_opt,
        student_opt=student_opt,
        sampler=ConditionSampler(SeededRng(cfg.seed).child("train")),
        teacher_digest=teacher.digest(),
        run_id=run_id,
        emitter=emitter,
    )


def _checked(term: str, fn: Callable[[], Tensor]) -> Tensor:
    try:
        value = fn()
    except FloatingPointError as e:
        raise NonFiniteLossError(term, str(e)) from e
    if not np.all(np.isfinite(value.data)):
        raise NonFiniteLossError(term, f"value {value.data!r}")
    return value


def _grad_scope(enabled: bool):
    return nullcontext() if enabled else no_grad()


def train_step_generator(state: RunState, cfg: TrainConfig) -> GeneratorLossBreakdown:
    """One optimizer step on G; parts of disabled components are still reported."""
    gen, teacher = state.generator, state.teacher
    w, sw = cfg.weights, cfg.switches
    coeff = effective_weights(w, sw)
    n = cfg.batch_size

    y, p = state.sampler.conditions(n, gen.num_classes, gen.grid_cells)
    z1 = state.sampler.z(n, gen.cfg.z_dim)
    z2 = state.sampler.z(n, gen.cfg.z_dim)
    x1 = _checked("generator", lambda: generate(gen, z1, y, p))
    x2 = _checked("generator", lambda: generate(gen, z2, y, p))
    X = ops.concat([x1, x2], axis=0)
    Y = np.concatenate([y, y])
    P = np.concatenate([p, p])
    stored = teacher.stored_stats()

    parts: Dict[str, Tensor] = {}
    res_e = teacher.forward(X, mode="eval")
    maps_e = attention_maps(res_e.backbone)
    if maps_e.shape[1] * maps_e.shape[2] != gen.grid_cells:
        raise ValueError(
            f"teacher attention grid {maps_e.shape[1:]} does not match generator grid {gen.cfg.grid}×{gen.cfg.grid}"
        )
    parts["ce_eval"] = _checked("ce_eval", lambda: ce_loss(res_e.logits, Y))
    parts["bns_eval"] = _checked("bns_eval", lambda: bns_loss(res_e.stats, stored))
    with _grad_scope(coeff["cacm"] != 0.0):
        parts["cacm"] = _checked("cacm", lambda: cacm_loss(maps_e, P, w.relax_cacm))
    if coeff["adversarial"] == 0.0 and gen.num_classes < 4:
        # fewer than 2 non-target classes
        parts["adversarial"] = Tensor(np.float32(0.0))
    else:
        first, second = np.arange(n), np.arange(n, 2 * n)
        with _grad_scope(coeff["adversarial"] != 0.0):
            parts["adversarial"] = _checked(
                "adversarial",
                lambda: adversarial_loss(
                    z1, z2, ops.take(res_e.logits, first, axis=0), ops.take(res_e.logits, second, axis=0), w.js_guard
                ),
            )

    with _grad_scope(sw.penalty):
        res_t = teacher.forward(X, mode="train")
        maps_t = attention_maps(res_t.backbone)
        parts["ce_train_penalty"] = _checked("ce_train_penalty", lambda: ce_loss(res_t.logits, Y))
        parts["bns_train_penalty"] = _checked("bns_train_penalty", lambda: bns_loss(res_t.stats, stored))
        parts["cacm_penalty"] = _checked("cacm_penalty", lambda: cacm_penalty(maps_t, maps_e, w.relax_map))

    breakdown = generator_objective(parts, w, sw)
    if not np.isfinite(breakdown.total):
        raise NonFiniteLossError("total", f"parts {breakdown.parts()}")
    state.gen_opt.zero_grad()
    breakdown.loss.backward()
    state.gen_opt.step()

    state.last_samples = X.detach()
    state.last_breakdown = breakdown
    return breakdown


def observe_activations(state: RunState) -> None:
    """Run Q on the latest generated batch so its open activation observers see it."""
    if state.last_samples is None:
        raise RuntimeError("observe_activations: no generated batch yet")
    with no_grad():
        state.student.forward(state.last_samples, record_stats=False)


def train_step_student(state: RunState, cfg: TrainConfig, batch: Optional[Tensor] = None) -> float:
    """One optimizer step on Q against the teacher's eval-mode outputs on a fresh batch (or on ``batch``)."""
    if not all_frozen(state.student):
        raise RuntimeError("train_step_student: activation quantizers are still observing; finish warm-up first")
    with no_grad():
        x = batch if batch is not None else state.sampler.batch(state.generator, cfg.batch_size)[0]
        teacher_logits = state.teacher.forward(x, mode="eval", record_stats=False).logits
    student_logits = state.student.forward(x, record_stats=False).logits
    loss = _checked("student", lambda: student_objective(student_logits, teacher_logits, cfg.weights))
    state.student_opt.zero_grad()
    loss.backward()
    state.student_opt.step()
    state.last_student_loss = loss.item()
    return state.last_student_loss


def _set_epoch_lr(state: RunState, cfg: TrainConfig, epoch: int) -> None:
    state.epoch = epoch
    state.gen_opt.lr = step_lr(cfg.gen_lr, epoch, cfg.epochs, cfg.lr_gamma, cfg.lr_decay_fraction)
    state.student_opt.lr = step_lr(cfg.student_lr, epoch, cfg.epochs, cfg.lr_gamma, cfg.lr_decay_fraction)


def _iteration_record(state: RunState, breakdown: GeneratorLossBreakdown, student_loss: Optional[float]) -> Dict[str, Any]:
    return {
        "t": state.t,
        "epoch": state.epoch,
        **breakdown.parts(),
        "total": breakdown.total,
        "student_loss": student_loss,
        "lr_g": state.gen_opt.lr,
        "lr_s": state.student_opt.lr,
    }


def _run_epoch(state: RunState, cfg: TrainConfig, epoch: int, phase: str) -> Dict[str, Any]:
    _set_epoch_lr(state, cfg, epoch)
    records = []
    for _ in range(cfg.iters_per_epoch):
        breakdown = train_step_generator(state, cfg)
        if phase == "warmup":
            observe_activations(state)
            student_loss = None
        else:
            student_loss = train_step_student(state, cfg)
        record = _iteration_record(state, breakdown, student_loss)
        state.emit("iteration", phase, record)
        records.append(record)
        state.t += 1

    summary: Dict[str, Any] = {"epoch": epoch, "phase": phase}
    for key in PART_NAMES + ("total",):
        summary[key] = float(np.mean([r[key] for r in records]))
    student = [r["student_loss"] for r in records if r["student_loss"] is not None]
    summary["student_loss"] = float(np.mean(student)) if student else None
    state.history.append(summary)

    if state.teacher.digest() != state.teacher_digest:
        raise RuntimeError(f"teacher parameters or BN statistics changed during epoch {epoch}")
    message = f"G={summary['total']:.4f}"
    if summary["student_loss"] is not None:
        message += f" Q={summary['student_loss']:.4f}"
    state.emit("epoch_done", phase, {"epoch": epoch, "message": message})
    return summary


def warmup_calibrate(state: RunState, cfg: TrainConfig) -> None:
    """Generator-only epochs that feed Q's activation observers, then freeze every activation bound."""
    if all_frozen(state.student):
        raise RuntimeError("warmup_calibrate: activation quantizers are already frozen")
    student_digest = state.student.digest()
    for epoch in range(cfg.warmup_epochs):
        _run_epoch(state, cfg, epoch, "warmup")
    freeze_activations(state.student)
    if state.student.digest() != student_digest:
        raise RuntimeError("student parameters changed during warm-up")
    state.emit("warmup_done", "warmup", {"message": f"{state.t} iterations"})


def save_checkpoint(state: RunState, root: str | Path) -> Path:
    """generator/ and student/ archives under ``root/epoch_XXXX``."""
    out = Path(root) / f"epoch_{state.epoch + 1:04d}"
    save_model(state.generator, out / "generator")
    save_model(state.student, out / "student")
    return out


@dataclass
class AcqResult:
    generator: GeneratorNet
    student: LayerGraph
    report: Dict[str, Any]


def run_acq(
    cfg: TrainConfig,
    teacher: LayerGraph,
    eval_data: Optional[ImageDataset] = None,
    emitter: Optional[EventEmitter] = None,
    run_id: str = "acq",
    checkpoint_dir: Optional[str | Path] = None,
    diagnostic_count: int = 256,
) -> AcqResult:
    """
    Warm-up, then alternating generator / student steps for ``cfg.epochs × cfg.iters_per_epoch``.

    Deterministic given ``cfg.seed``; the report holds no timestamps.
    """
    state = init_run_state(cfg, teacher, emitter, run_id)
    teacher_bn_before = bn_digest(teacher)
    state.emit("run_start", "train", {"message": f"{cfg.switches.label()} {cfg.n_w}w{cfg.n_a}a seed={cfg.seed}"})

    fp_acc = evaluate_accuracy(teacher, eval_data) if eval_data is not None else None
    warmup_calibrate(state, cfg)
    initial_acc = evaluate_accuracy(state.student, eval_data) if eval_data is not None else None

    student_bn = bn_digest(state.student)
    for epoch in range(cfg.warmup_epochs, cfg.epochs):
        _run_epoch(state, cfg, epoch, "train")
        if checkpoint_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(state, checkpoint_dir)
    if bn_digest(state.student) != student_bn:
        raise RuntimeError("student stored BN statistics changed during training")

    final_acc = evaluate_accuracy(state.student, eval_data) if eval_data is not None else None
    final_losses = state.last_breakdown.to_dict()
    final_losses["student_loss"] = state.last_student_loss

    report: Dict[str, Any] = {
        "kind": "train",
        "run_id": run_id,
        "seed": cfg.seed,
        "bits": f"{cfg.n_w}w{cfg.n_a}a",
        "switches": cfg.switches.label(),
        "config_fingerprint": hash_json(cfg.to_dict()),
        "iterations": state.t,
        "fp_accuracy": fp_acc,
        "initial_student_accuracy": initial_acc,
        "final_student_accuracy": final_acc,
        "final_losses": final_losses,
        "epoch_losses": state.history,
        "teacher_digest": {"before": state.teacher_digest, "after": teacher.digest()},
        "teacher_bn_digest": {"before": teacher_bn_before, "after": bn_digest(teacher)},
        "controllability": None,
        "diversity": None,
    }
    if diagnostic_count >= 2:
        report["controllability"] = attention_controllability(teacher, state.generator, diagnostic_count, cfg.seed)
        report["diversity"] = generated_diversity(teacher, state.generator, diagnostic_count, cfg.seed)

    state.emit("run_done", "train", {"message": f"final student accuracy {final_acc}" if final_acc is not None else ""})
    info(f"run_acq: {state.t} iterations, switches={cfg.switches.label()}")
    return AcqResult(generator=state.generator, student=state.student, report=report)
