"""测试配置层：profiles、覆盖、.env、日志格式、事件总线、fingerprint"""
import json
import os
from pathlib import Path

import numpy as np
import pytest

from acq_core.config import load_profiles, loss_profile, merge_train_config, resolve_train_config, schedule_profile
from acq_core.config import settings
from acq_core.config.settings import LossWeights, TrainConfig, get_default_workers, load_config_file
from acq_core.events import EventEmitter, JsonlListener, TrainingEvent
from acq_core.fingerprints import canonicalize_json, hash_arrays, hash_file, hash_json
from acq_core.resources import load_json_resource
from acq_core.utils.logger import get_logger


# ── profiles ──


def test_builtin_profiles():
    profiles = load_profiles()
    assert set(profiles["schedule"]) == {"full", "desk", "smoke"}
    assert set(profiles["loss"]) == {"cifar10", "cifar100", "imagenet", "mobilenetv2"}
    assert schedule_profile("full")["epochs"] == 400
    assert loss_profile("imagenet").gamma == 0.5


def test_resolve_layers_sources(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"weights": {"beta": 3.0}, "n_a": 8}))
    cfg = resolve_train_config("smoke", "cifar100", path=path, overrides={"weights.tau": 0.5})
    assert (cfg.epochs, cfg.iters_per_epoch, cfg.batch_size) == (2, 3, 4)
    assert cfg.weights.alpha == 0.1
    assert cfg.weights.beta == 3.0
    assert cfg.weights.tau == 0.5
    assert cfg.n_a == 8


@pytest.mark.parametrize("kwargs, message", [({"profile": "huge"}, "schedule profile"), ({"loss": "mnist"}, "loss profile")])
def test_unknown_profiles(kwargs, message):
    with pytest.raises(ValueError, match=message):
        resolve_train_config(**kwargs)


def test_merge_keeps_untouched_nested_keys():
    cfg = merge_train_config(TrainConfig(), {"generator": {"grid": 4}})
    assert cfg.generator.grid == 4
    assert cfg.generator.z_dim == 100


def test_overrides_reject_unknown_keys():
    cfg = TrainConfig()
    with pytest.raises(ValueError, match="Unknown config key"):
        cfg.with_overrides({"weights.delta": 1.0})
    with pytest.raises(ValueError, match="Unknown config section"):
        cfg.with_overrides({"optimizer.lr": 1.0})
    with pytest.raises(ValueError, match="unknown keys"):
        TrainConfig.from_dict({"epoch": 3})


def test_validation_errors():
    with pytest.raises(ValueError, match="warmup_epochs"):
        TrainConfig(epochs=2, warmup_epochs=2).validate()
    with pytest.raises(ValueError, match="n_w"):
        TrainConfig(n_w=1).validate()
    with pytest.raises(ValueError, match="must be >= 0"):
        LossWeights(beta=-1.0).validate()
    with pytest.raises(ValueError, match="relax_cacm must be > 0"):
        LossWeights(relax_cacm=0.0).validate()
    with pytest.raises(ValueError, match="fusion"):
        TrainConfig.from_dict({"generator": {"fusion": "mid"}}).validate()


def test_to_dict_round_trip():
    cfg = TrainConfig(n_w=3, gen_betas=(0.4, 0.9))
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_load_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "missing.json")
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        load_config_file(path)


# ── environment ──


def test_env_file_anchors_relative_paths(tmp_path, monkeypatch):
    monkeypatch.setenv("ACQ_TEST_FLAG", "")
    monkeypatch.delenv("ACQ_TEST_FLAG")
    monkeypatch.setattr(settings, "_env_file_dir", None)
    (tmp_path / ".env").write_text("ACQ_TEST_FLAG=on\n")
    settings.load_env_file(tmp_path / ".env")
    assert os.environ["ACQ_TEST_FLAG"] == "on"
    assert settings.resolve_relative_path("data/x") == (tmp_path / "data" / "x").resolve()
    assert settings.resolve_relative_path(tmp_path) == tmp_path


def test_run_workdir_under_data_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("DATA_DIR", str(tmp_path / "store"))
    settings.get_data_root.cache_clear()
    try:
        workdir = settings.get_run_workdir("desk")
        assert workdir == tmp_path / "store" / "runs" / "desk"
        assert workdir.is_dir()
    finally:
        settings.get_data_root.cache_clear()


@pytest.mark.parametrize("raw, expected", [(None, 1), ("4", 4), ("0", 1), ("many", 1)])
def test_default_workers(raw, expected, monkeypatch):
    if raw is None:
        monkeypatch.delenv("ACQ_WORKERS", raising=False)
    else:
        monkeypatch.setenv("ACQ_WORKERS", raw)
    assert get_default_workers() == expected


# ── logging / events ──


def test_logger_format_and_streams(capsys, monkeypatch):
    log = get_logger("quantize")
    log.info("start")
    log.warning("slow")
    monkeypatch.delenv("ACQ_DEBUG", raising=False)
    log.debug("hidden")
    out, err = capsys.readouterr()
    assert out == "[INFO] quantize: start\n"
    assert err == "[WARN] quantize: slow\n"

    monkeypatch.setenv("ACQ_DEBUG", "1")
    log.debug("shown")
    assert capsys.readouterr().out == "[DEBUG] quantize: shown\n"


def test_emitter_survives_listener_failure(capsys):
    seen = []
    emitter = EventEmitter()

    def broken(event):
        raise RuntimeError("disk full")

    emitter.on(broken)
    emitter.on(seen.append)
    emitter.emit(TrainingEvent(kind="iteration", run_id="r"))
    assert [e.kind for e in seen] == ["iteration"]
    assert "disk full" in capsys.readouterr().err


def test_jsonl_listener_writes_iterations_only(tmp_path):
    listener = JsonlListener(tmp_path / "m" / "metrics.jsonl")
    listener(TrainingEvent(kind="iteration", run_id="r", phase="warmup", data={"t": 0, "total": 1.5}))
    listener(TrainingEvent(kind="epoch_done", run_id="r", data={"epoch": 0}))
    listener.close()
    listener(TrainingEvent(kind="iteration", run_id="r", data={"t": 1}))
    lines = (tmp_path / "m" / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(line) for line in lines] == [{"phase": "warmup", "t": 0, "total": 1.5}]


# ── fingerprints ──


def test_hash_json_is_canonical():
    assert hash_json({"b": 1, "a": [1, None], "c": None}) == hash_json({"a": [1], "b": 1, "d": {}})
    assert hash_json({"a": 1}) != hash_json({"a": 2})
    assert canonicalize_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'
    assert hash_json({}).startswith("sha256:")


def test_hash_file_and_arrays(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"abc")
    assert hash_file(path) == "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    a = np.zeros(3, dtype=np.float32)
    assert hash_arrays([("w", a)]) == hash_arrays([("w", a.copy())])
    assert hash_arrays([("w", a)]) != hash_arrays([("v", a)])
    assert hash_arrays([("w", a)]) != hash_arrays([("w", a.reshape(1, 3))])


def test_canonical_json_accepts_numpy_and_tuples():
    doc = {"bits": (4, 4), "gamma": np.float32(0.5), "hist": np.arange(3), "path": Path("runs/a")}
    assert canonicalize_json(doc) == '{"bits":[4,4],"gamma":0.5,"hist":[0,1,2],"path":"runs/a"}'
    with pytest.raises(ValueError):
        canonicalize_json({"loss": float("nan")})


def test_bundled_resources():
    assert set(load_json_resource("profiles.json")) == {"loss", "schedule"}
    with pytest.raises(FileNotFoundError, match="no bundled resource"):
        load_json_resource("missing.json")
