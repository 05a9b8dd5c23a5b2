"""Model checkpoint directory: one f32le matrix per tensor plus `model.json`."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .constants import MODEL_JSON
from .encoder import DENSE_NAMES, EncoderParams, ShallowTable
from .errors import FormatError
from .formats import read_f32_matrix, write_f32_matrix
from .model import SIDES, ModelParams
from .utils import write_json

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def _tensor_file(directory: Path, name: str) -> Path:
    return directory / f"{name}.f32"


def _tensors(model: ModelParams) -> Dict[str, np.ndarray]:
    out = {}
    for side in SIDES:
        out[f"{side}.shallow"] = model.shallow(side).data
        for name, arr in model.encoder(side).dense().items():
            out[f"{side}.{name}"] = arr
    return out


def save_checkpoint(
    directory: Path,
    model: ModelParams,
    train_config: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write every tensor of `model` and its metadata; identical models give identical bytes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = _tensors(model)
    for name, arr in tensors.items():
        write_f32_matrix(_tensor_file(directory, name), arr)

    meta: Dict[str, Any] = {
        "version": CHECKPOINT_VERSION,
        "dim": model.dim,
        "hidden": model.entity_encoder.hidden,
        "variant": model.variant.value,
        "decoder": model.decoder.value,
        "alpha": {side: float(model.encoder(side).alpha[0]) for side in SIDES},
        "num_entities": model.num_entities,
        "num_relations": model.num_relations,
        "num_base_relations": model.num_base_relations,
        "inverse_relations": model.inverse_relations,
        "tensors": {name: list(arr.shape) for name, arr in tensors.items()},
        "train_config": train_config or {},
    }
    meta.update(extra or {})
    write_json(directory / MODEL_JSON, meta)
    logger.debug(f"Saved checkpoint to {directory}")
    return directory


def read_model_json(directory: Path) -> Dict[str, Any]:
    path = Path(directory) / MODEL_JSON
    if not path.exists():
        raise FormatError(path, "checkpoint metadata not found", suggestion="Point --models at directories written by `kglp train`.")
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(path, f"invalid JSON: {e}") from e
    if meta.get("version") != CHECKPOINT_VERSION:
        raise FormatError(path, f"unsupported checkpoint version {meta.get('version')!r}")
    return meta


def load_checkpoint(directory: Path) -> ModelParams:
    directory = Path(directory)
    meta = read_model_json(directory)
    shapes = meta["tensors"]

    def tensor(name: str) -> np.ndarray:
        if name not in shapes:
            raise FormatError(directory / MODEL_JSON, f"tensor {name} not listed")
        arr = read_f32_matrix(_tensor_file(directory, name))
        shape = tuple(shapes[name])
        if int(np.prod(shape)) != arr.size:
            raise FormatError(_tensor_file(directory, name), f"expected shape {shape}, found {arr.shape}")
        return arr.reshape(shape)

    def encoder(side: str) -> EncoderParams:
        return EncoderParams(**{name: tensor(f"{side}.{name}") for name in DENSE_NAMES})

    return ModelParams(
        entity_encoder=encoder("entity"),
        entity_shallow=ShallowTable(tensor("entity.shallow")),
        relation_encoder=encoder("relation"),
        relation_shallow=ShallowTable(tensor("relation.shallow")),
        variant=meta["variant"],
        decoder=meta["decoder"],
        num_base_relations=int(meta["num_base_relations"]),
        inverse_relations=bool(meta["inverse_relations"]),
    )
