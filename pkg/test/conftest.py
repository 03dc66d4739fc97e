"""
共享 fixtures

未 pip install 时也能直接跑：把 packages/*/src 放到 sys.path。
慢测试（端到端训练）默认跳过，设置 ACQ_RUN_SLOW=1 启用。
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

_ROOT = Path(__file__).resolve().parent.parent
for _src in sorted((_ROOT / "packages").glob("*/src")):
    if str(_src) not in sys.path:
        sys.path.insert(0, str(_src))

from acq_core.autodiff import SeededRng, Tensor  # noqa: E402
from acq_core.config.settings import GeneratorConfig, ShapesConfig, TrainConfig  # noqa: E402
from acq_core.config import resolve_train_config  # noqa: E402


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ACQ_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow: set ACQ_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng() -> SeededRng:
    return SeededRng(1234)


@pytest.fixture
def randn(rng):
    """randn(*shape, requires_grad=False) → float32 Tensor from a fixed stream."""
    stream = rng.child("randn")

    def make(*shape, requires_grad: bool = False) -> Tensor:
        return Tensor(stream.normal(shape), requires_grad=requires_grad)

    return make


@pytest.fixture
def tiny_shapes() -> ShapesConfig:
    return ShapesConfig(num_classes=4, image_size=16, train_size=64, test_size=32, seed=3)


@pytest.fixture
def tiny_generator_config() -> GeneratorConfig:
    return GeneratorConfig(z_dim=8, channels=8, img_size=16, img_channels=3, grid=4)


@pytest.fixture
def smoke_config(tiny_generator_config) -> TrainConfig:
    """smoke schedule with a generator sized for 16×16 inputs."""
    cfg = resolve_train_config("smoke", "cifar10")
    return TrainConfig.from_dict({**cfg.to_dict(), "generator": tiny_generator_config.to_dict()})


@pytest.fixture
def tiny_teacher():
    """Untrained tiny-plain teacher in eval mode, 4 classes, 16×16 input (backbone grid 4×4)."""
    from acq_core.nn.zoo import build_target_net

    net = build_target_net("tiny-plain", num_classes=4, width=4, seed=0)
    net.mode = "eval"
    return net.freeze()


def assert_close(a, b, tol: float = 1e-6):
    np.testing.assert_allclose(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), atol=tol, rtol=0)


@pytest.fixture(scope="session")
def shapes_teacher():
    """Default shapes dataset and a tiny-resnet pretrained on it (20 epochs); slow tests only."""
    from acq_pipeline.processors.data import PretrainOptions, generate_shapes, pretrain_teacher

    data = generate_shapes(ShapesConfig())
    teacher = pretrain_teacher(data.train, PretrainOptions())
    return data, teacher
