"""测试 quantizer：量化数值、observer、STE、quantize_graph"""
import numpy as np
import pytest

from acq_core.autodiff import Tensor, no_grad, ops
from acq_core.nn import bn_digest, build_target_net
from acq_pipeline.processors.data import evaluate_accuracy
from acq_pipeline.processors.quantizer import (
    PER_CHANNEL,
    QuantizerState,
    all_frozen,
    fake_quantize,
    freeze,
    freeze_activations,
    observe,
    parse_bits,
    quantize_graph,
    quantizer_states,
)

from conftest import assert_close


def _frozen(n: int, l: float, u: float) -> QuantizerState:
    state = QuantizerState(site="t", n=n)
    observe(Tensor([l, u]), state)
    freeze(state)
    return state


def _fq(x, state) -> np.ndarray:
    return fake_quantize(Tensor(np.asarray(x, dtype=np.float32)), state).data


def test_exact_grid_point():
    state = _frozen(4, 0.0, 15.0)
    assert float(state.s) == pytest.approx(1.0)
    assert float(state.b) == pytest.approx(8.0)
    assert _fq([0.0], state)[0] == pytest.approx(0.0)


def test_symmetric_range_upper_bound():
    state = _frozen(4, -1.0, 1.0)
    assert float(state.s) == pytest.approx(2 / 15)
    assert float(state.b) == pytest.approx(0.5)
    assert _fq([1.0], state)[0] == pytest.approx(1.0, abs=1e-6)


def test_out_of_range_clips():
    state = _frozen(4, -1.0, 1.0)
    assert _fq([2.0], state)[0] == pytest.approx(1.0, abs=1e-6)
    assert _fq([-5.0], state)[0] == pytest.approx(-1.0, abs=1e-6)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 8])
@pytest.mark.parametrize("bounds", [(-1.0, 1.0), (0.0, 6.0), (-3.5, 0.25)])
def test_round_trip_error_within_half_step(n, bounds):
    l, u = bounds
    state = _frozen(n, l, u)
    x = np.linspace(l, u, 10_000, dtype=np.float32)
    err = np.abs(_fq(x, state).astype(np.float64) - x)
    assert err.max() <= float(state.s) / 2 + 1e-6


@pytest.mark.parametrize("n", [2, 4, 8])
def test_idempotent_and_monotone(n):
    state = _frozen(n, -2.0, 3.0)
    x = np.linspace(-4.0, 5.0, 5000, dtype=np.float32)
    once = _fq(x, state)
    assert np.array_equal(_fq(once, state), once)
    assert np.all(np.diff(once) >= 0)


def test_ste_gradient_inside_bounds_only():
    state = _frozen(4, -1.0, 1.0)
    x = Tensor([-2.0, -0.3, 0.4, 0.99, 1.5], requires_grad=True)
    ops.sum(fake_quantize(x, state)).backward()
    assert_close(x.grad, [0, 1, 1, 1, 0])


def test_fake_quantize_requires_frozen_state():
    with pytest.raises(RuntimeError, match="frozen"):
        fake_quantize(Tensor([0.0]), QuantizerState(site="a", n=4))


def test_observe_running_extrema():
    state = QuantizerState(site="a", n=4)
    observe(Tensor([-2.0, 3.0]), state)
    observe(Tensor([-1.0, 5.0]), state)
    freeze(state)
    assert (float(state.l), float(state.u)) == (-2.0, 5.0)


def test_observe_frozen_is_error():
    state = _frozen(4, 0.0, 1.0)
    with pytest.raises(RuntimeError, match="frozen"):
        observe(Tensor([0.5]), state)


def test_per_channel_bounds_are_independent():
    state = QuantizerState(site="w", n=4, granularity=PER_CHANNEL)
    w = np.array([[[-1.0, 2.0]], [[0.5, 4.0]]], dtype=np.float32)
    observe(Tensor(w), state)
    freeze(state)
    assert_close(state.l, [-1.0, 0.5])
    assert_close(state.u, [2.0, 4.0])


def test_degenerate_bounds_rejected():
    state = QuantizerState(site="a", n=4)
    observe(Tensor([3.0, 3.0]), state)
    with pytest.raises(ValueError, match="degenerate"):
        freeze(state)


def test_bits_out_of_range():
    with pytest.raises(ValueError):
        QuantizerState(site="a", n=1)
    with pytest.raises(ValueError):
        QuantizerState(site="a", n=9)


def test_from_parts_restores_frozen_state():
    state = _frozen(5, -0.7, 2.2)
    copy = QuantizerState.from_parts(state.to_dict(), state.arrays())
    assert copy.frozen
    assert_close(copy.s, state.s, tol=0)
    assert_close(copy.b, state.b, tol=0)


# ── bit-width strings ──


def test_parse_bits():
    assert parse_bits("4w4a") == (4, 4)
    assert parse_bits("8w4a") == (8, 4)
    for bad in ("4w", "w4a", "4x4a", "9w4a", "4w1a"):
        with pytest.raises(ValueError):
            parse_bits(bad)


# ── quantize_graph ──


def _observe_and_freeze(student, batch):
    student.forward(batch, mode="eval", record_stats=False)
    freeze_activations(student)


def test_quantized_tiny_resnet_evaluates(randn):
    fp = build_target_net("tiny-resnet", num_classes=10, width=4)
    student = quantize_graph(fp, 4, 4)
    batch = randn(4, 3, 32, 32)
    _observe_and_freeze(student, batch)
    assert all_frozen(student)
    out = student.forward(batch, mode="eval").logits
    assert out.shape == (4, 10)
    assert np.isfinite(out.data).all()


def test_weight_codebook_cardinality(tiny_teacher):
    student = quantize_graph(tiny_teacher, 3, 4)
    params = dict(student.named_parameters())
    for site, state in quantizer_states(student).items():
        if state.granularity != PER_CHANNEL:
            continue
        w = fake_quantize(params[site], state).data
        for channel in w.reshape(w.shape[0], -1):
            assert len(np.unique(channel)) <= 2 ** 3


def test_quantize_graph_copies_and_fixes_bn_stats(tiny_teacher, randn):
    student = quantize_graph(tiny_teacher, 4, 4)
    assert bn_digest(student) == bn_digest(tiny_teacher)
    assert student.mode == "eval"
    _observe_and_freeze(student, randn(4, 3, 16, 16))
    student.forward(randn(4, 3, 16, 16))
    assert bn_digest(student) == bn_digest(tiny_teacher)
    # teacher untouched: no hooks installed on the original
    assert not quantizer_states(tiny_teacher)


def test_quantize_graph_skips_first_last_when_asked(tiny_teacher):
    student = quantize_graph(tiny_teacher, 4, 4, quantize_first_last=False)
    sites = quantizer_states(student)
    assert "block1.conv.weight" not in sites and "fc.weight" not in sites
    assert "block2.conv.weight" in sites


def test_quantize_graph_rejects_bad_bits(tiny_teacher):
    with pytest.raises(ValueError):
        quantize_graph(tiny_teacher, 9, 4)


def test_freeze_activations_names_unobserved_sites(tiny_teacher):
    student = quantize_graph(tiny_teacher, 4, 4)
    with pytest.raises(RuntimeError, match="block1.conv.input"):
        freeze_activations(student)


@pytest.mark.slow
def test_eight_bit_student_keeps_teacher_accuracy(shapes_teacher):
    data, teacher = shapes_teacher
    student = quantize_graph(teacher, 8, 8)
    with no_grad():
        for images, _ in data.train.subset(np.arange(1024)).batches(128):
            student.forward(Tensor(images), record_stats=False)
    freeze_activations(student)
    fp = evaluate_accuracy(teacher, data.test)
    assert evaluate_accuracy(student, data.test) >= fp - 0.01
