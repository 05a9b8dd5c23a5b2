"""Configuration dataclasses for training, distillation, rules and the pipeline."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar, Union, get_args, get_origin, get_type_hints

from typing_extensions import Self

from .constants import THREADS_ENV
from .decoder import Decoder
from .encoder import EncoderVariant
from .errors import ConfigurationError

T = TypeVar("T")

PATH_KEYS = ("train", "entity_feat", "rel_feat", "valid", "test", "rules", "out")


def _type_name(hint: Any) -> str:
    return hint.__name__ if isinstance(hint, type) else str(hint).replace("typing.", "")


def _accepts(hint: Any, value: Any) -> bool:
    if get_origin(hint) is Union:
        return any(_accepts(arg, value) for arg in get_args(hint))
    if hint is type(None):
        return value is None
    # bool is an int subclass, so it is ruled out for the numeric fields
    if hint is bool:
        return isinstance(value, bool)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if hint is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is str:
        return isinstance(value, str)
    if hint is Path:
        return isinstance(value, (str, Path))
    if get_origin(hint) is dict:
        return isinstance(value, Mapping)
    return True


def _check_types(cls: type, data: Mapping[str, Any], section: str) -> None:
    hints = get_type_hints(cls)
    for key, value in data.items():
        if not _accepts(hints[key], value):
            raise ConfigurationError(
                f"'{section}.{key}' must be {_type_name(hints[key])}, got {type(value).__name__} {value!r}"
            )


def _from_mapping(cls: Type[T], data: Optional[Mapping[str, Any]], section: str) -> T:
    if data is not None and not isinstance(data, Mapping):
        raise ConfigurationError(f"'{section}' must be a table, got {type(data).__name__}")
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in '{section}': {', '.join(unknown)}",
            f"Valid keys are: {', '.join(sorted(known))}",
        )
    _check_types(cls, data, section)
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigurationError(f"invalid '{section}' section: {e}") from e


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 300
    mlp_hidden: int = 3000
    lr_shallow: float = 1e-1
    lr_dense: float = 1e-4
    batch_size: int = 800
    neg_samples: int = 100
    workers: int = 4
    epochs: int = 10
    seed: int = 0
    variant: str = EncoderVariant.CONCAT_MLP_RESIDUAL.value
    decoder: str = Decoder.COMPLEX.value
    # 0 => evaluate once per epoch
    eval_every: int = 0
    inverse_relations: bool = True
    deterministic: bool = True

    def __post_init__(self) -> None:
        if self.dim < 2 or self.dim % 2:
            raise ConfigurationError(f"dim must be a positive even number, got {self.dim}")
        if self.mlp_hidden < 1:
            raise ConfigurationError(f"mlp_hidden must be >= 1, got {self.mlp_hidden}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.neg_samples < 1:
            raise ConfigurationError(f"neg_samples must be >= 1, got {self.neg_samples}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.epochs < 0 or self.eval_every < 0:
            raise ConfigurationError("epochs and eval_every must be non-negative")
        if self.lr_shallow < 0 or self.lr_dense < 0:
            raise ConfigurationError("learning rates must be non-negative")
        try:
            EncoderVariant(self.variant)
            Decoder(self.decoder)
        except ValueError as e:
            raise ConfigurationError(str(e), "Run `kglp train --help` for accepted values.") from e

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> Self:
        return _from_mapping(cls, data, "train")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 1.0
    steps: int = 100
    batch_size: int = 256
    # None => reuse the TrainConfig rates
    lr_shallow: Optional[float] = None
    lr_dense: Optional[float] = None
    stages: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if self.stages < 0:
            raise ConfigurationError(f"stages must be >= 0, got {self.stages}")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigurationError("steps must be >= 0 and batch_size >= 1")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> Self:
        return _from_mapping(cls, data, "distill")

    def resolved(self, train: TrainConfig) -> Self:
        return replace(
            self,
            lr_shallow=train.lr_shallow if self.lr_shallow is None else self.lr_shallow,
            lr_dense=train.lr_dense if self.lr_dense is None else self.lr_dense,
        )


@dataclass(frozen=True)
class RuleConfig:
    min_support: int = 2
    min_conf: float = 0.0
    subgraphs: int = 1
    # None => whole graph per subgraph
    slice_len: Optional[int] = None
    augment_threshold: float = 0.95
    finetune_epochs: int = 1

    def __post_init__(self) -> None:
        for name in ("min_conf", "augment_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")
        if self.min_support < 0 or self.subgraphs < 1 or self.finetune_epochs < 0:
            raise ConfigurationError("min_support >= 0, subgraphs >= 1 and finetune_epochs >= 0 required")
        if self.slice_len is not None and self.slice_len < 1:
            raise ConfigurationError(f"slice_len must be >= 1, got {self.slice_len}")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> Self:
        return _from_mapping(cls, data, "rules")


@dataclass(frozen=True)
class LoggingConfig:
    level: str = "INFO"
    format: str = "text"
    file: Optional[Path] = None
    rotation_max_bytes: int = 5 * 1024 * 1024
    rotation_backup_count: int = 5

    def __post_init__(self) -> None:
        if self.level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigurationError(f"unknown log level {self.level!r}")
        if self.format not in ("text", "json"):
            raise ConfigurationError(f"log format must be 'text' or 'json', got {self.format!r}")
        if self.file is not None and not isinstance(self.file, Path):
            object.__setattr__(self, "file", Path(self.file))

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> Self:
        return _from_mapping(cls, data, "logging")


@dataclass(frozen=True)
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    rules: RuleConfig = field(default_factory=RuleConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    paths: Dict[str, str] = field(default_factory=dict)
    seed: int = 0
    deterministic: bool = True
    workers: int = 4
    tie_break: str = "optimistic"
    distill_on: str = "both"

    def __post_init__(self) -> None:
        unknown = sorted(set(self.paths) - set(PATH_KEYS))
        if unknown:
            raise ConfigurationError(
                f"unknown path key(s): {', '.join(unknown)}", f"Valid keys are: {', '.join(PATH_KEYS)}"
            )
        if self.tie_break not in ("optimistic", "average"):
            raise ConfigurationError(f"tie_break must be 'optimistic' or 'average', got {self.tie_break!r}")
        if self.distill_on not in ("eval", "test", "both"):
            raise ConfigurationError(f"distill_on must be eval, test or both, got {self.distill_on!r}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> Self:
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(
                f"unknown top-level key(s): {', '.join(unknown)}",
                f"Valid keys are: {', '.join(sorted(known))}",
            )
        sections = ("train", "distill", "rules", "logging", "paths")
        _check_types(cls, {k: v for k, v in data.items() if k not in sections}, "top-level")
        if not isinstance(data.get("paths") or {}, Mapping):
            raise ConfigurationError(f"'paths' must be a table, got {type(data['paths']).__name__}")
        return cls(
            train=TrainConfig.from_dict(data.pop("train", None)),
            distill=DistillConfig.from_dict(data.pop("distill", None)),
            rules=RuleConfig.from_dict(data.pop("rules", None)),
            logging=LoggingConfig.from_dict(data.pop("logging", None)),
            paths={k: str(v) for k, v in dict(data.pop("paths", None) or {}).items()},
            **data,
        )

    @classmethod
    def from_file(cls, path: Path) -> Self:
        from .config_loader import load_config  # Lazy import for module isolation

        return cls.from_dict(load_config(path))

    def path(self, key: str) -> Optional[Path]:
        value = self.paths.get(key)
        return Path(value) if value else None

    def effective_workers(self) -> int:
        return resolve_workers(self.workers)


def resolve_workers(configured: int) -> int:
    """Worker count after the KGLP_THREADS override."""
    env = os.getenv(THREADS_ENV)
    if env is None or env.strip() == "":
        return configured
    try:
        value = int(env)
    except ValueError as e:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from e
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value
