"""测试 generator：低维 / 高维条件融合、生成确定性、梯度流"""
import numpy as np
import pytest

from acq_core.autodiff import SeededRng, Tensor, no_grad, ops
from acq_core.config.settings import GeneratorConfig
from acq_core.nn import ForwardContext
from acq_pipeline.processors.generator import (
    ConditionSampler,
    build_generator,
    condition_fuse_lowdim,
    generate,
    position_grid,
    rebuild_generator,
)

from conftest import assert_close


def _inputs(gen, n: int, seed: int = 0):
    rng = SeededRng(seed)
    z = Tensor(rng.child("z").normal((n, gen.cfg.z_dim)))
    y = np.arange(n) % gen.num_classes
    p = rng.child("p").integers(0, gen.grid_cells, n)
    return z, y, p


@pytest.fixture
def highdim_config() -> GeneratorConfig:
    return GeneratorConfig(z_dim=8, channels=8, img_size=16, grid=2, fusion="highdim")


# ── low-dimensional fusion ──


def test_lowdim_hand_evaluated():
    i = condition_fuse_lowdim(
        Tensor([[3.0, 4.0]]), np.array([0]), np.array([0]),
        Tensor([[1.0, 2.0]]), Tensor([[2.0, 0.5]]),
    )
    assert_close(i.data, [[8.0, 3.0]])


def test_lowdim_identities(randn):
    z = randn(3, 4)
    classes = randn(2, 4)
    ones = Tensor(np.ones((5, 4)))
    y, p = np.array([0, 1, 1]), np.array([4, 0, 2])
    assert_close(condition_fuse_lowdim(z, y, p, classes, ones).data, classes.data[y] + z.data, tol=1e-6)
    zeros = Tensor(np.zeros((2, 4)))
    assert_close(condition_fuse_lowdim(z, y, p, zeros, ones).data, z.data)


def test_lowdim_matches_captured_embeddings(tiny_generator_config):
    gen = build_generator(tiny_generator_config, num_classes=4, seed=1)
    z, y, p = _inputs(gen, 6)
    head = gen.head
    got = condition_fuse_lowdim(z, y, p, head.class_table, head.position_table).data
    expected = (head.class_table.data[y] + z.data) * head.position_table.data[p]
    assert_close(got, expected, tol=1e-6)


def test_lowdim_rejects_out_of_range(randn):
    with pytest.raises(ValueError, match="label"):
        condition_fuse_lowdim(randn(1, 2), np.array([2]), np.array([0]), randn(2, 2), randn(4, 2))
    with pytest.raises(ValueError, match="position"):
        condition_fuse_lowdim(randn(1, 2), np.array([0]), np.array([4]), randn(2, 2), randn(4, 2))


# ── high-dimensional fusion ──


def test_position_grid_one_hot_without_smoothing():
    P = position_grid(np.array([5]), 4, 4, 0.0)
    expected = np.zeros((1, 1, 4, 4), dtype=np.float32)
    expected[0, 0, 1, 1] = 1.0
    assert np.array_equal(P, expected)


def test_position_grid_label_smoothing():
    P = position_grid(np.array([10, 63]), 8, 8, 0.1).reshape(2, -1).astype(np.float64)
    assert P[0, 10] == pytest.approx(1 - 0.1 + 0.1 / 64, abs=1e-7)
    assert P[0, 0] == pytest.approx(0.1 / 64, abs=1e-7)
    assert_close(P.sum(axis=1), [1.0, 1.0], tol=1e-6)
    assert (P >= 0).all()


def test_highdim_residual_shape(highdim_config, randn):
    gen = build_generator(highdim_config, num_classes=3)
    ctx = ForwardContext(mode="train", record_stats=False)
    i = randn(4, highdim_config.z_dim)
    p = np.array([0, 1, 2, 3])
    assert gen.head.fuse_highdim(i, p, ctx).shape == gen.head.stem_features(i, ctx).shape


def test_highdim_stem_takes_noise_directly(highdim_config, randn):
    gen = build_generator(highdim_config, num_classes=3)
    assert not any("class_embedding" in name for name, _ in gen.named_parameters())
    z = randn(4, highdim_config.z_dim)
    p = np.array([0, 1, 2, 3])
    head_ctx = ForwardContext(mode="train", labels=np.array([0, 1, 2, 0]), positions=p, record_stats=False)
    fused = gen.head(z, head_ctx).data
    assert_close(fused, gen.head.fuse_highdim(z, p, ForwardContext(mode="train", record_stats=False)).data, tol=0)
    other_labels = ForwardContext(mode="train", labels=np.array([2, 2, 1, 1]), positions=p, record_stats=False)
    assert_close(gen.head(z, other_labels).data, fused, tol=0)


def test_highdim_rejects_indivisible_grid():
    with pytest.raises(ValueError, match="not divisible"):
        build_generator(GeneratorConfig(z_dim=8, channels=8, img_size=16, grid=3, fusion="highdim"), num_classes=2)


# ── generate ──


@pytest.mark.parametrize("fusion", ["lowdim", "highdim"])
def test_generate_deterministic_and_bounded(fusion, highdim_config, tiny_generator_config):
    cfg = highdim_config if fusion == "highdim" else tiny_generator_config
    gen = build_generator(cfg, num_classes=4, seed=2)
    z, y, p = _inputs(gen, 8)
    a = generate(gen, z, y, p).data
    b = generate(gen, z, y, p).data
    assert a.shape == (8, 3, 16, 16)
    assert np.array_equal(a, b)


def test_generate_range_over_many_draws(tiny_generator_config):
    gen = build_generator(tiny_generator_config, num_classes=4)
    sampler = ConditionSampler(SeededRng(9))
    with no_grad():
        x, y, p, _ = sampler.batch(gen, 1000)
    assert x.data.min() >= -1.0 and x.data.max() <= 1.0
    assert y.min() >= 0 and y.max() < 4
    assert p.min() >= 0 and p.max() < gen.grid_cells


def test_generate_rejects_bad_conditions(tiny_generator_config):
    gen = build_generator(tiny_generator_config, num_classes=4)
    z, y, p = _inputs(gen, 2)
    with pytest.raises(ValueError):
        generate(gen, z, np.array([0, 4]), p)
    with pytest.raises(ValueError):
        generate(gen, z, y, np.array([0, gen.grid_cells]))


def test_sampler_streams_continue(tiny_generator_config):
    gen = build_generator(tiny_generator_config, num_classes=4)
    sampler = ConditionSampler(SeededRng(0).child("train"))
    with no_grad():
        first = sampler.batch(gen, 4)[3].data
        second = sampler.batch(gen, 4)[3].data
    assert not np.array_equal(first, second)


# ── gradient flow ──

# a per-channel bias directly in front of a batch-statistics BN is cancelled by it
_BN_CANCELLED = {"conv1.bias", "conv2.bias", "head.fuse.bias"}


@pytest.mark.parametrize("fusion", ["lowdim", "highdim"])
def test_every_parameter_receives_gradient(fusion, highdim_config, tiny_generator_config):
    cfg = highdim_config if fusion == "highdim" else tiny_generator_config
    gen = build_generator(cfg, num_classes=4, seed=3)
    n = 12
    z = Tensor(SeededRng(5).normal((n, cfg.z_dim)))
    y = np.arange(n) % 4
    p = np.arange(n) % gen.grid_cells
    ops.sum(ops.square(generate(gen, z, y, p))).backward()
    for name, t in gen.named_parameters():
        if name in _BN_CANCELLED:
            continue
        assert t.grad is not None and np.abs(t.grad).max() > 0, name


def test_rebuild_from_arch(tiny_generator_config):
    gen = build_generator(tiny_generator_config, num_classes=4, seed=7)
    twin = rebuild_generator(gen.arch)
    assert twin.digest() == gen.digest()
