"""测试 data：shapes 生成、CIFAR-10 二进制读取、准确率、teacher 预训练"""
import numpy as np
import pytest

from acq_core.autodiff import Tensor, no_grad
from acq_core.config.settings import ShapesConfig
from acq_pipeline.errors import DatasetFormatError
from acq_pipeline.processors.data import (
    ImageDataset,
    PretrainOptions,
    dataset_descriptor,
    evaluate_accuracy,
    export_dataset_images,
    generate_shapes,
    load_dataset,
    pretrain_teacher,
    read_cifar10,
)
from acq_pipeline.utils.pnm import read_pnm


def _cifar_bytes(labels, fill: int = 0) -> bytes:
    out = bytearray()
    for label in labels:
        out.append(label)
        out.extend(bytes([fill]) * 3072)
    return bytes(out)


# ── shapes ──


def test_shapes_deterministic(tiny_shapes):
    a, b = generate_shapes(tiny_shapes), generate_shapes(tiny_shapes)
    assert np.array_equal(a.train.images, b.train.images)
    assert np.array_equal(a.test.labels, b.test.labels)
    other = generate_shapes(ShapesConfig(**{**tiny_shapes.to_dict(), "seed": 4}))
    assert not np.array_equal(a.train.images, other.train.images)


def test_shapes_balanced_and_bounded(tiny_shapes):
    data = generate_shapes(tiny_shapes)
    assert data.train.images.shape == (64, 3, 16, 16)
    assert np.bincount(data.train.labels).tolist() == [16] * 4
    assert data.train.images.min() >= -1.0 and data.train.images.max() <= 1.0
    cents = data.train.centroids
    assert (cents >= 0).all() and (cents < 16).all()


@pytest.mark.parametrize("size", [16, 32])
def test_bright_region_centroid_matches_record(size):
    cfg = ShapesConfig(num_classes=10, image_size=size, train_size=60, test_size=20, seed=11)
    data = generate_shapes(cfg).train
    rr, cc = np.mgrid[0:size, 0:size]
    for image, centroid in zip(data.images, data.centroids):
        bright = image.mean(axis=0) > 0.0
        assert bright.any()
        found = np.array([rr[bright].mean(), cc[bright].mean()])
        assert np.linalg.norm(found - centroid) <= 2.0


def test_shapes_rejects_bad_config():
    with pytest.raises(ValueError, match="at most"):
        generate_shapes(ShapesConfig(num_classes=11))
    with pytest.raises(ValueError, match="image_size"):
        generate_shapes(ShapesConfig(image_size=8))


def test_descriptor_round_trip(tiny_shapes):
    desc = dataset_descriptor("shapes", shapes=tiny_shapes)
    test = load_dataset(desc, "test")
    assert len(test) == tiny_shapes.test_size
    with pytest.raises(ValueError, match="split"):
        load_dataset(desc, "val")
    with pytest.raises(ValueError, match="needs a path"):
        dataset_descriptor("cifar10")


# ── CIFAR-10 ──


def test_read_cifar10_normalizes(tmp_path):
    (tmp_path / "test_batch.bin").write_bytes(_cifar_bytes([3, 7], fill=255) + _cifar_bytes([0], fill=0))
    data = read_cifar10(tmp_path, "test")
    assert data.images.shape == (3, 3, 32, 32)
    assert data.labels.tolist() == [3, 7, 0]
    assert np.allclose(data.images[0], 1.0) and np.allclose(data.images[2], -1.0)


def test_read_cifar10_truncated_record(tmp_path):
    (tmp_path / "test_batch.bin").write_bytes(_cifar_bytes([1, 2])[:-10])
    with pytest.raises(DatasetFormatError) as exc:
        read_cifar10(tmp_path, "test")
    assert exc.value.offset == 3073


def test_read_cifar10_bad_label(tmp_path):
    (tmp_path / "test_batch.bin").write_bytes(_cifar_bytes([1, 12]))
    with pytest.raises(DatasetFormatError, match="outside"):
        read_cifar10(tmp_path, "test")


def test_read_cifar10_missing_batch(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_cifar10(tmp_path, "train")


# ── accuracy / pretrain ──


def test_evaluate_accuracy_range(tiny_teacher, tiny_shapes):
    test = generate_shapes(tiny_shapes).test
    acc = evaluate_accuracy(tiny_teacher, test, batch_size=8)
    assert 0.0 <= acc <= 1.0
    with pytest.raises(ValueError, match="empty"):
        evaluate_accuracy(tiny_teacher, test.subset(np.array([], dtype=np.int64)))


def test_dataset_length_mismatch():
    with pytest.raises(ValueError):
        ImageDataset(np.zeros((2, 3, 4, 4), dtype=np.float32), np.zeros(3, dtype=np.int64))


def test_pretrain_returns_frozen_eval_graph(tiny_shapes):
    data = generate_shapes(tiny_shapes)
    opts = PretrainOptions(spec="tiny-plain", epochs=1, batch_size=16, width=4, seed=0)
    graph = pretrain_teacher(data.train, opts)
    assert graph.mode == "eval"
    assert not any(p.requires_grad for p in graph.parameters())
    assert 0.0 <= evaluate_accuracy(graph, data.test) <= 1.0


@pytest.mark.slow
def test_pretrained_stats_track_the_data(shapes_teacher):
    data, teacher = shapes_teacher
    captured = {}
    with no_grad():
        for images, _ in data.train.subset(np.arange(512)).batches(64):
            stats = teacher.forward(Tensor(images), mode="eval", capture=True).stats
            for name, x in stats.pre_bn.items():
                captured.setdefault(name, []).append(x.astype(np.float64))
    stored = teacher.stored_stats()
    for name, chunks in captured.items():
        x = np.concatenate(chunks)
        mean = x.mean(axis=(0, 2, 3))
        std = np.sqrt(x.var(axis=(0, 2, 3)) + 1e-5)
        mu, sd = (np.asarray(v, np.float64) for v in stored[name])
        # deviations measured in units of the data spread
        assert np.mean(np.abs(mu - mean) / std) <= 0.1, name
        assert np.mean(np.abs(sd - std) / std) <= 0.1, name


@pytest.mark.slow
def test_pretrained_modes_agree(shapes_teacher):
    data, teacher = shapes_teacher
    train_mode = evaluate_accuracy(teacher, data.test, mode="train")
    assert evaluate_accuracy(teacher, data.test) >= train_mode - 0.05


def test_export_dataset_images(tiny_shapes, tmp_path):
    test = generate_shapes(tiny_shapes).test
    paths = export_dataset_images(test, tmp_path, count=3)
    assert len(paths) == 3
    assert read_pnm(paths[0]).shape == (16, 16, 3)
