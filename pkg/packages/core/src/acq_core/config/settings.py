import json
import os
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

# 全局变量：存储 .env 文件所在目录（用于解析相对路径）
_env_file_dir: Path | None = None


def load_env_file(env_path: str | Path | None = None) -> None:
    """
    加载项目级 .env 文件（显式加载，不污染全局环境）。

    如果 env_path 为 None，自动查找项目根目录的 .env 文件。

    Args:
        env_path: .env 文件路径（None = 自动查找）
    """
    global _env_file_dir

    try:
        from dotenv import load_dotenv
    except ImportError:
        return

    if env_path is None:
        current = Path(__file__).resolve()
        for parent in current.parents:
            env_file = parent / ".env"
            if env_file.exists():
                load_dotenv(env_file, override=False)
                _env_file_dir = env_file.parent
                return
    else:
        env_path = Path(env_path)
        if env_path.exists():
            load_dotenv(env_path, override=False)
            _env_file_dir = env_path.parent


def resolve_relative_path(path: str | Path) -> Path:
    """
    解析相对路径：相对于"项目根"（含 .env 的目录），与运行进程的 cwd 无关。

    解析顺序：
      1. 绝对路径直接返回
      2. 已设 _env_file_dir → 相对于它
      3. 否则自动调一次 load_env_file()
      4. 找不到 .env → 从 settings.py 反推项目根
    """
    path = Path(path)
    if path.is_absolute():
        return path

    global _env_file_dir
    if _env_file_dir is None:
        load_env_file()

    if _env_file_dir is not None:
        return (_env_file_dir / path).resolve()

    # settings.py 在 packages/core/src/acq_core/config/，向上 5 层到项目根
    return (Path(__file__).resolve().parents[5] / path).resolve()


@lru_cache(maxsize=1)
def get_data_root() -> Path:
    """DATA_DIR, default data/. Root for runs, datasets and checkpoints."""
    raw = os.getenv("DATA_DIR", "data")
    data_root = resolve_relative_path(raw)
    data_root.mkdir(parents=True, exist_ok=True)
    return data_root


def get_runs_dir() -> Path:
    d = get_data_root() / "runs"
    d.mkdir(parents=True, exist_ok=True)
    return d


def get_run_workdir(name: str) -> Path:
    d = get_runs_dir() / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def get_default_workers() -> int:
    """ACQ_WORKERS env var: worker threads for sweep / ablation rows."""
    raw = os.getenv("ACQ_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ── Config dataclasses ──


def _from_dict(cls, data: Dict[str, Any]):
    """Build a flat dataclass from a dict, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    return cls(**data)


@dataclass
class LossWeights:
    """Generator / student loss coefficients.

    relax_cacm / relax_map are the relax factors of the attention-center
    matching loss and the attention consistency hinge; penalty_* weight the
    train-mode replicas of CE, BNS and CACM; alpha / beta / gamma are the
    BNS / attention / adversarial trade-offs; tau weights distillation.
    """
    relax_cacm: float = 0.2
    relax_map: float = 0.1
    penalty_ce: float = 0.5
    penalty_bns: float = 1.0
    penalty_cacm: float = 1.0
    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = 1.0
    tau: float = 1.0
    js_guard: float = 1e-4

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value < 0:
                raise ValueError(f"LossWeights.{f.name} must be >= 0, got {value}")
        if self.js_guard <= 0:
            raise ValueError(f"LossWeights.js_guard must be > 0, got {self.js_guard}")
        if self.relax_cacm <= 0:
            raise ValueError(f"LossWeights.relax_cacm must be > 0, got {self.relax_cacm}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossWeights":
        return _from_dict(cls, data)


@dataclass
class AblationSwitches:
    """Component toggles: attention-center matching, adversarial loss, consistency penalties."""
    cacm: bool = True
    adversarial: bool = True
    penalty: bool = True

    def label(self) -> str:
        on = [name for name, flag in (("cacm", self.cacm), ("ad", self.adversarial), ("penalty", self.penalty)) if flag]
        return "+".join(on) if on else "none"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AblationSwitches":
        return _from_dict(cls, data)


@dataclass
class GeneratorConfig:
    z_dim: int = 100
    channels: int = 64
    img_size: int = 32
    img_channels: int = 3
    grid: int = 8  # attention grid h = w，与 teacher backbone 输出一致
    fusion: str = "lowdim"  # lowdim | highdim
    smoothing: float = 0.1
    fusion_channels: Optional[int] = None  # c1 = c2；None → channels // 2
    leaky_slope: float = 0.2

    def validate(self) -> None:
        if self.fusion not in ("lowdim", "highdim"):
            raise ValueError(f"GeneratorConfig.fusion must be 'lowdim' or 'highdim', got {self.fusion!r}")
        if self.img_size % 4 != 0:
            raise ValueError(f"GeneratorConfig.img_size must be divisible by 4, got {self.img_size}")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError(f"GeneratorConfig.smoothing must be in [0, 1), got {self.smoothing}")
        if self.z_dim <= 0 or self.channels <= 0 or self.grid <= 0:
            raise ValueError("GeneratorConfig.z_dim / channels / grid must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeneratorConfig":
        return _from_dict(cls, data)


@dataclass
class ShapesConfig:
    num_classes: int = 10
    image_size: int = 32
    train_size: int = 5000
    test_size: int = 1000
    noise_std: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if not 1 <= self.num_classes <= 10:
            raise ValueError(f"ShapesConfig.num_classes must be in [1, 10], got {self.num_classes}")
        if self.image_size < 16:
            raise ValueError(f"ShapesConfig.image_size must be >= 16, got {self.image_size}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ShapesConfig":
        return _from_dict(cls, data)


@dataclass
class TrainConfig:
    """All ACQ hyperparameters.

    Schedule defaults are the desk profile; the full profile is 400 epochs x
    200 iterations with the same learning rates.
    """
    epochs: int = 50
    iters_per_epoch: int = 50
    warmup_epochs: int = 2
    batch_size: int = 16

    # generator: Adam, lr ×0.1 every quarter of the run (every 100 of 400 epochs)
    gen_lr: float = 1e-3
    gen_betas: Tuple[float, float] = (0.5, 0.999)
    # student: momentum SGD
    student_lr: float = 1e-4
    student_momentum: float = 0.9
    student_nesterov: bool = True
    student_weight_decay: float = 1e-4
    lr_gamma: float = 0.1
    lr_decay_fraction: float = 0.25

    n_w: int = 4
    n_a: int = 4
    quantize_first_last: bool = True

    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 = off
    log_every: int = 50  # iterations

    weights: LossWeights = field(default_factory=LossWeights)
    switches: AblationSwitches = field(default_factory=AblationSwitches)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    @property
    def total_iters(self) -> int:
        return self.epochs * self.iters_per_epoch

    @property
    def warmup_iters(self) -> int:
        return self.warmup_epochs * self.iters_per_epoch

    def validate(self) -> None:
        if self.epochs <= 0 or self.iters_per_epoch <= 0:
            raise ValueError("TrainConfig.epochs and iters_per_epoch must be positive")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError(
                f"TrainConfig.warmup_epochs ({self.warmup_epochs}) must be in [0, epochs={self.epochs})"
            )
        if self.batch_size < 2:
            raise ValueError(f"TrainConfig.batch_size must be >= 2, got {self.batch_size}")
        for name in ("n_w", "n_a"):
            bits = getattr(self, name)
            if not 2 <= bits <= 8:
                raise ValueError(f"TrainConfig.{name} must be in [2, 8], got {bits}")
        if not 0.0 < self.lr_decay_fraction <= 1.0:
            raise ValueError(f"TrainConfig.lr_decay_fraction must be in (0, 1], got {self.lr_decay_fraction}")
        self.weights.validate()
        self.generator.validate()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["gen_betas"] = list(self.gen_betas)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        data = dict(data)
        nested = {
            "weights": LossWeights,
            "switches": AblationSwitches,
            "generator": GeneratorConfig,
        }
        kwargs: Dict[str, Any] = {}
        for key, sub_cls in nested.items():
            if key in data:
                kwargs[key] = sub_cls.from_dict(data.pop(key))
        if "gen_betas" in data:
            data["gen_betas"] = tuple(data["gen_betas"])
        cfg = _from_dict(cls, {**data, **kwargs})
        return cfg

    def with_overrides(self, overrides: Dict[str, Any]) -> "TrainConfig":
        """Return a copy with dotted-key overrides applied (e.g. ``weights.gamma``)."""
        data = self.to_dict()
        for key, value in overrides.items():
            target = data
            parts = key.split(".")
            for part in parts[:-1]:
                if part not in target or not isinstance(target[part], dict):
                    raise ValueError(f"Unknown config section in override: {key}")
                target = target[part]
            if parts[-1] not in target:
                raise ValueError(f"Unknown config key in override: {key}")
            target[parts[-1]] = value
        return TrainConfig.from_dict(data)


def load_config_file(path: str | Path) -> Dict[str, Any]:
    """Read a JSON config document mirroring TrainConfig.to_dict()."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"Config file must hold a JSON object: {path}")
    return data
