"""测试 training：warm-up、交替训练、确定性、teacher 不变性、产物写出"""
import json

import numpy as np
import pytest

from acq_core.autodiff import SeededRng, Tensor, no_grad
from acq_core.config.settings import AblationSwitches
from acq_core.nn import bn_digest
from acq_pipeline.archive import load_model
from acq_pipeline.processors.data import PretrainOptions, generate_shapes, pretrain_teacher
from acq_pipeline.processors.generator import ConditionSampler
from acq_pipeline.processors.losses import PART_NAMES, ce_loss, student_objective
from acq_pipeline.processors.quantizer import activation_states, all_frozen, quantize_graph
from acq_pipeline.processors.training import impl as training_impl
from acq_pipeline.processors.training import (
    init_run_state,
    run,
    run_acq,
    train_step_generator,
    train_step_student,
    warmup_calibrate,
)
from acq_pipeline.schema import load_report, validate_report


def test_student_step_needs_warmup(smoke_config, tiny_teacher):
    state = init_run_state(smoke_config, tiny_teacher)
    with pytest.raises(RuntimeError, match="warm-up"):
        train_step_student(state, smoke_config)


def test_generator_step_reports_every_part(smoke_config, tiny_teacher):
    state = init_run_state(smoke_config, tiny_teacher)
    before = state.generator.digest()
    breakdown = train_step_generator(state, smoke_config)
    assert set(breakdown.parts()) == set(PART_NAMES)
    assert all(np.isfinite(v) for v in breakdown.parts().values())
    assert state.generator.digest() != before
    assert state.last_samples.shape == (2 * smoke_config.batch_size, 3, 16, 16)


def test_warmup_freezes_activations_without_touching_weights(smoke_config, tiny_teacher):
    state = init_run_state(smoke_config, tiny_teacher)
    digest = state.student.digest()
    warmup_calibrate(state, smoke_config)
    assert all_frozen(state.student)
    assert state.student.digest() == digest
    assert state.t == smoke_config.warmup_iters
    with pytest.raises(RuntimeError, match="already frozen"):
        warmup_calibrate(state, smoke_config)
    assert np.isfinite(train_step_student(state, smoke_config))


def test_run_without_warmup_names_unobserved_sites(smoke_config, tiny_teacher):
    cfg = smoke_config.with_overrides({"warmup_epochs": 0})
    with pytest.raises(RuntimeError, match="block1.conv.input"):
        run_acq(cfg, tiny_teacher, diagnostic_count=0)


def test_run_acq_report(smoke_config, tiny_teacher, tiny_shapes):
    test = generate_shapes(tiny_shapes).test
    bn_before = bn_digest(tiny_teacher)
    result = run_acq(smoke_config, tiny_teacher, eval_data=test, diagnostic_count=8)
    report = result.report
    validate_report("train", report)
    assert report["iterations"] == smoke_config.total_iters
    assert report["bits"] == "4w4a" and report["switches"] == "cacm+ad+penalty"
    assert [e["phase"] for e in report["epoch_losses"]] == ["warmup", "train"]
    assert report["epoch_losses"][0]["student_loss"] is None
    assert report["teacher_digest"]["before"] == report["teacher_digest"]["after"]
    assert bn_digest(tiny_teacher) == bn_before
    assert 0.0 <= report["final_student_accuracy"] <= 1.0
    assert report["controllability"]["count"] == 8
    assert set(PART_NAMES) <= set(report["final_losses"])


def test_run_acq_is_deterministic(smoke_config, tiny_teacher):
    a = run_acq(smoke_config, tiny_teacher, diagnostic_count=4)
    b = run_acq(smoke_config, tiny_teacher, diagnostic_count=4)
    assert json.dumps(a.report, sort_keys=True) == json.dumps(b.report, sort_keys=True)
    assert a.student.digest() == b.student.digest()
    assert a.generator.digest() == b.generator.digest()

    other = run_acq(smoke_config.with_overrides({"seed": 1}), tiny_teacher, diagnostic_count=0)
    assert other.generator.digest() != a.generator.digest()


def test_disabled_components_still_reported(smoke_config, tiny_teacher):
    cfg = smoke_config.with_overrides({"switches": AblationSwitches(False, False, False).to_dict()})
    report = run_acq(cfg, tiny_teacher, diagnostic_count=0).report
    assert report["switches"] == "none"
    assert report["controllability"] is None
    for name in ("cacm", "adversarial", "cacm_penalty"):
        assert np.isfinite(report["final_losses"][name])


def test_processor_writes_artifacts(smoke_config, tiny_teacher, tmp_path):
    cfg = smoke_config.with_overrides({"checkpoint_every": 1})
    result = run(
        cfg,
        tiny_teacher,
        student_dir=tmp_path / "student",
        generator_dir=tmp_path / "generator",
        report_path=tmp_path / "report.json",
        metrics_path=tmp_path / "metrics.jsonl",
        checkpoint_dir=tmp_path / "checkpoints",
        diagnostic_count=4,
    )
    assert result.outputs == ["student", "generator", "report", "metrics"]
    report = load_report(tmp_path / "report.json", "train")
    assert report["iterations"] == 6

    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 6
    first = json.loads(lines[0])
    assert first["phase"] == "warmup" and first["t"] == 0
    assert set(PART_NAMES) <= set(first)

    student = load_model(tmp_path / "student")
    assert all_frozen(student)
    assert (tmp_path / "checkpoints" / "epoch_0002" / "generator" / "model.json").exists()


@pytest.mark.slow
def test_pretrained_teacher_end_to_end(tiny_shapes, smoke_config):
    data = generate_shapes(tiny_shapes)
    teacher = pretrain_teacher(data.train, PretrainOptions(spec="tiny-plain", epochs=3, batch_size=16, width=4))
    cfg = smoke_config.with_overrides({"epochs": 4, "iters_per_epoch": 5, "warmup_epochs": 1})
    report = run_acq(cfg, teacher, eval_data=data.test, diagnostic_count=32).report
    validate_report("train", report)
    assert report["iterations"] == 20
    assert report["fp_accuracy"] is not None
    assert report["teacher_digest"]["before"] == report["teacher_digest"]["after"]


def test_generator_total_is_ce_when_other_weights_are_zero(smoke_config, tiny_teacher):
    cfg = smoke_config.with_overrides({
        "weights.alpha": 0.0,
        "weights.beta": 0.0,
        "weights.gamma": 0.0,
        "weights.penalty_ce": 0.0,
    })
    state = init_run_state(cfg, tiny_teacher)
    breakdown = train_step_generator(state, cfg)
    assert breakdown.total == pytest.approx(breakdown.ce_eval, abs=1e-6)
    assert breakdown.loss.item() == pytest.approx(breakdown.ce_eval, abs=1e-6)

    # same label stream as the run, teacher CE on the batch it produced
    replica = ConditionSampler(SeededRng(cfg.seed).child("train"))
    y, _ = replica.conditions(cfg.batch_size, state.generator.num_classes, state.generator.grid_cells)
    with no_grad():
        logits = tiny_teacher.forward(state.last_samples, mode="eval", record_stats=False).logits
        ce = ce_loss(logits, np.concatenate([y, y])).item()
    assert breakdown.ce_eval == pytest.approx(ce, abs=1e-5)


def test_frozen_bounds_are_the_extrema_of_warmup_batches(smoke_config, tiny_teacher, monkeypatch):
    seen = []
    observe = training_impl.observe_activations

    def recording(state):
        seen.append(state.last_samples.data.copy())
        observe(state)

    monkeypatch.setattr(training_impl, "observe_activations", recording)
    state = init_run_state(smoke_config, tiny_teacher)
    warmup_calibrate(state, smoke_config)
    assert len(seen) == smoke_config.warmup_iters

    frozen = activation_states(state.student)
    # the first quantized layer sees the images themselves
    assert float(frozen[0].l) == pytest.approx(min(float(x.min()) for x in seen))
    assert float(frozen[0].u) == pytest.approx(max(float(x.max()) for x in seen))

    replay = quantize_graph(tiny_teacher, smoke_config.n_w, smoke_config.n_a, smoke_config.quantize_first_last)
    with no_grad():
        for x in seen:
            replay.forward(Tensor(x), record_stats=False)
    for got, want in zip(frozen, activation_states(replay)):
        assert got.site == want.site
        np.testing.assert_array_equal(got.l, want.observer_min)
        np.testing.assert_array_equal(got.u, want.observer_max)


def test_student_step_descends_on_a_fixed_batch(smoke_config, tiny_teacher):
    improved = 0
    for seed in range(5):
        cfg = smoke_config.with_overrides({"seed": seed, "n_w": 8, "n_a": 8})
        state = init_run_state(cfg, tiny_teacher)
        warmup_calibrate(state, cfg)
        with no_grad():
            x = state.sampler.batch(state.generator, cfg.batch_size)[0]
            target = tiny_teacher.forward(x, mode="eval", record_stats=False).logits
        state.student_opt.lr = 0.02
        before = train_step_student(state, cfg, batch=x)
        with no_grad():
            after = student_objective(state.student.forward(x, record_stats=False).logits, target, cfg.weights).item()
        improved += after < before
    assert improved >= 3
