"""测试 attention：attention map、center、位置编号、MAE、PGM 导出、diversity"""
import numpy as np
import pytest

from acq_core.autodiff import SeededRng, Tensor, ops
from acq_core.autodiff.gradcheck import gradient_check
from acq_pipeline.processors.attention import (
    AttentionMap,
    attention_diversity,
    attention_maps,
    attention_matrix,
    chebyshev,
    export_heatmap,
    export_mode_pair,
    map_distance,
    p_to_cell,
    position_index,
)
from acq_pipeline.utils.pnm import read_pnm

from conftest import assert_close


def test_single_spike():
    A = np.zeros((1, 3, 3), dtype=np.float32)
    A[0, 0, 0] = 2.0
    amap = attention_matrix(A)
    assert amap.center == (0, 0)
    assert amap.M[0, 0] == 1.0
    assert amap.M.sum() == 1.0


def test_hand_evaluated_two_channels():
    A = np.array([[[1, 0], [0, 0]], [[1, 0], [0, 2]]], dtype=np.float32)
    amap = attention_matrix(A)
    assert_close(amap.M, [[0.5, 0.0], [0.0, 1.0]])
    assert amap.center == (1, 1)


def test_channel_permutation_invariant(rng):
    A = rng.normal((5, 4, 4))
    a = attention_matrix(A).M
    b = attention_matrix(A[[3, 1, 4, 0, 2]]).M
    assert_close(a, b, tol=1e-6)


def test_constant_input_gives_zero_map():
    amap = attention_matrix(np.ones((2, 3, 3), dtype=np.float32))
    assert not amap.M.any()
    assert amap.center == (0, 0)


def test_batched_maps_and_range(rng):
    maps = attention_matrix(rng.normal((6, 4, 8, 8)), mode="train")
    assert len(maps) == 6
    for amap in maps:
        assert amap.mode == "train"
        assert amap.M.min() >= 0.0 and amap.M.max() == pytest.approx(1.0)


@pytest.mark.parametrize("k", [3.0, -0.5, 1e3])
def test_center_scale_invariant(rng, k):
    A = rng.normal((3, 5, 5))
    assert attention_matrix(A * k).center == attention_matrix(A).center


def test_empty_spatial_dims_rejected():
    with pytest.raises(ValueError, match="empty spatial"):
        attention_maps(Tensor(np.zeros((1, 2, 0, 3))))


def test_attention_maps_gradient(rng):
    A = Tensor(rng.normal((2, 3, 3, 3)), requires_grad=True)
    w = Tensor(rng.child("w").normal((2, 3, 3)))
    gradient_check(lambda: ops.sum(attention_maps(A) * w), [A], tol=2e-3)


# ── positions ──


@pytest.mark.parametrize("p, cell", [(0, (0, 0)), (63, (7, 7)), (10, (1, 2))])
def test_p_to_cell(p, cell):
    assert p_to_cell(p, 8, 8) == cell
    assert position_index(cell, 8) == p


def test_position_bijection_non_square():
    h, w = 3, 5
    assert [position_index(p_to_cell(p, h, w), w) for p in range(h * w)] == list(range(h * w))


def test_p_out_of_range():
    with pytest.raises(ValueError):
        p_to_cell(64, 8, 8)
    with pytest.raises(ValueError):
        p_to_cell(-1, 8, 8)


def test_position_index_bounds():
    assert position_index((2, 4), 5, h=3) == 14
    with pytest.raises(ValueError, match="outside height"):
        position_index((3, 0), 5, h=3)
    with pytest.raises(ValueError, match="outside width"):
        position_index((0, 5), 5, h=3)


def test_chebyshev():
    assert chebyshev(np.array([0]), np.array([9]), 8)[0] == 1
    assert chebyshev(np.array([0]), np.array([63]), 8)[0] == 7


# ── map distance ──


def test_map_distance_examples():
    z, o = np.zeros((2, 2)), np.ones((2, 2))
    assert map_distance(z, z) == 0.0
    assert map_distance(z, o) == 1.0
    assert map_distance(np.array([[0, 1], [1, 0]]), np.array([[1, 1], [0, 0]])) == 0.5


def test_map_distance_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        map_distance(np.zeros((2, 2)), np.zeros((2, 3)))


# ── export ──


def test_export_heatmap_nearest_blocks(tmp_path):
    amap = AttentionMap(M=np.array([[0.0, 1.0], [1.0, 0.0]]), center=(0, 1))
    path = export_heatmap(amap, 4, 4, tmp_path / "m.pgm")
    assert path.read_text().startswith("P2\n4 4\n255\n")
    pixels = read_pnm(path)
    expected = np.array([[0, 0, 255, 255]] * 2 + [[255, 255, 0, 0]] * 2, dtype=np.uint8)
    assert np.array_equal(pixels, expected)


def test_export_all_zero_map_is_black(tmp_path):
    pixels = read_pnm(export_heatmap(np.zeros((3, 3)), 6, 6, tmp_path / "z.pgm"))
    assert not pixels.any()


def test_export_round_trip_quantized_values(tmp_path):
    M = SeededRng(4).uniform(0.0, 1.0, (4, 4))
    pixels = read_pnm(export_heatmap(M, 4, 4, tmp_path / "r.pgm"))
    assert np.array_equal(pixels, np.clip(np.floor(M.astype(np.float64) * 255 + 0.5), 0, 255).astype(np.uint8))


def test_export_mode_pair_side_by_side(tmp_path):
    ev = AttentionMap(M=np.zeros((2, 2)), center=(0, 0))
    tr = AttentionMap(M=np.ones((2, 2)), center=(0, 0), mode="train")
    pixels = read_pnm(export_mode_pair(ev, tr, 4, 4, tmp_path / "pair.pgm", gap=2))
    assert pixels.shape == (4, 10)
    assert not pixels[:, :4].any()
    assert (pixels[:, 4:] == 255).all()


# ── diversity ──


def test_attention_diversity_per_class():
    maps = np.zeros((4, 2, 2))
    maps[0, 0, 0] = maps[1, 0, 0] = 1.0  # class 0: same center, identical maps
    maps[2, 0, 1] = maps[3, 1, 1] = 1.0  # class 1: two centers
    out = attention_diversity(maps, np.array([0, 0, 1, 1]))
    assert out["0"] == {"count": 2, "distinct_centers": 1, "mean_pairwise_mae": 0.0}
    assert out["1"]["distinct_centers"] == 2
    assert out["1"]["mean_pairwise_mae"] == pytest.approx(0.5)
