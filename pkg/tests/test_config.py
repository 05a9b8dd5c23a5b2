# tests/test_config.py

"""Unit tests for config.py."""

from pathlib import Path

import pytest

from kglp.config import (
    DistillConfig,
    LoggingConfig,
    PipelineConfig,
    RuleConfig,
    TrainConfig,
    resolve_workers,
)
from kglp.errors import ConfigurationError


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.train.dim, cfg.train.mlp_hidden) == (300, 3000)
    assert (cfg.train.batch_size, cfg.train.neg_samples) == (800, 100)
    assert cfg.train.variant == "concat-mlp-residual"
    assert cfg.train.decoder == "complex"
    assert cfg.distill.temperature == 1.0
    assert cfg.rules.augment_threshold == 0.95
    assert cfg.tie_break == "optimistic"
    assert cfg.deterministic is True


@pytest.mark.parametrize("cls,kwargs", [
    (TrainConfig, {"dim": 7}),
    (TrainConfig, {"mlp_hidden": 0}),
    (TrainConfig, {"neg_samples": 0}),
    (TrainConfig, {"epochs": -1}),
    (TrainConfig, {"lr_dense": -1.0}),
    (TrainConfig, {"variant": "transformer"}),
    (TrainConfig, {"decoder": "rotate"}),
    (DistillConfig, {"temperature": 0.0}),
    (DistillConfig, {"batch_size": 0}),
    (DistillConfig, {"stages": -1}),
    (RuleConfig, {"augment_threshold": 1.5}),
    (RuleConfig, {"subgraphs": 0}),
    (RuleConfig, {"slice_len": 0}),
    (LoggingConfig, {"level": "LOUD"}),
    (LoggingConfig, {"format": "xml"}),
    (PipelineConfig, {"tie_break": "pessimistic"}),
    (PipelineConfig, {"distill_on": "train"}),
    (PipelineConfig, {"paths": {"weights": "w"}}),
])
def test_invalid_values(cls, kwargs):
    with pytest.raises(ConfigurationError):
        cls(**kwargs)


def test_from_dict_nested_sections():
    cfg = PipelineConfig.from_dict({
        "train": {"dim": 8, "epochs": 2},
        "distill": {"stages": 1},
        "rules": {"min_support": 5},
        "logging": {"file": "run/kglp.log"},
        "paths": {"train": "data/train.tsv"},
        "seed": 4,
    })
    assert (cfg.train.dim, cfg.train.epochs, cfg.train.mlp_hidden) == (8, 2, 3000)
    assert cfg.distill.stages == 1
    assert cfg.rules.min_support == 5
    assert cfg.logging.file == Path("run/kglp.log")
    assert cfg.path("train") == Path("data/train.tsv")
    assert cfg.path("test") is None
    assert cfg.seed == 4


@pytest.mark.parametrize("data,match", [
    ({"trian": {}}, "unknown top-level"),
    ({"train": {"size": 3}}, "unknown key.*'train'"),
])
def test_from_dict_rejects_unknown_keys(data, match):
    with pytest.raises(ConfigurationError, match=match):
        PipelineConfig.from_dict(data)


@pytest.mark.parametrize("data,match", [
    ({"train": {"dim": "8"}}, r"'train.dim' must be int, got str"),
    ({"train": {"epochs": 1.5}}, r"'train.epochs' must be int"),
    ({"train": {"inverse_relations": "yes"}}, r"'train.inverse_relations' must be bool"),
    ({"train": {"lr_shallow": True}}, r"'train.lr_shallow' must be float"),
    ({"distill": {"lr_dense": "fast"}}, r"'distill.lr_dense' must be Optional\[float\]"),
    ({"rules": {"slice_len": 2.0}}, r"'rules.slice_len' must be Optional\[int\]"),
    ({"logging": {"file": 3}}, r"'logging.file' must be Optional\[.*Path\]"),
    ({"workers": "4"}, r"'top-level.workers' must be int"),
    ({"deterministic": 1}, r"'top-level.deterministic' must be bool"),
    ({"train": [1, 2]}, r"'train' must be a table"),
    ({"paths": ["data/train.tsv"]}, r"'paths' must be a table"),
])
def test_from_dict_rejects_wrong_types(data, match):
    with pytest.raises(ConfigurationError, match=match):
        PipelineConfig.from_dict(data)


def test_from_dict_accepts_ints_for_floats():
    cfg = PipelineConfig.from_dict({"train": {"lr_shallow": 1}, "distill": {"temperature": 2, "lr_dense": None}})
    assert cfg.train.lr_shallow == 1
    assert cfg.distill.temperature == 2
    assert cfg.distill.lr_dense is None


def test_from_file(tmp_path):
    path = tmp_path / "kglp.toml"
    path.write_text("[tool.kglp]\nworkers = 2\n[tool.kglp.distill]\ntemperature = 2.5\n", encoding="utf-8")
    cfg = PipelineConfig.from_file(path)
    assert cfg.workers == 2
    assert cfg.distill.temperature == 2.5


def test_distill_rates_resolve_from_training():
    train = TrainConfig(lr_shallow=0.3, lr_dense=0.02)
    assert DistillConfig().resolved(train).lr_shallow == 0.3
    resolved = DistillConfig(lr_dense=0.5).resolved(train)
    assert (resolved.lr_shallow, resolved.lr_dense) == (0.3, 0.5)


def test_train_config_round_trip():
    config = TrainConfig(dim=16, seed=9, inverse_relations=False)
    assert TrainConfig.from_dict(config.to_dict()) == config


@pytest.mark.parametrize("env,expected", [(None, 5), ("", 5), ("2", 2)])
def test_resolve_workers(monkeypatch, env, expected):
    if env is None:
        monkeypatch.delenv("KGLP_THREADS", raising=False)
    else:
        monkeypatch.setenv("KGLP_THREADS", env)
    assert resolve_workers(5) == expected
    assert PipelineConfig(workers=5).effective_workers() == expected


@pytest.mark.parametrize("env", ["many", "0"])
def test_resolve_workers_rejects_bad_env(monkeypatch, env):
    monkeypatch.setenv("KGLP_THREADS", env)
    with pytest.raises(ConfigurationError, match="KGLP_THREADS"):
        resolve_workers(4)
