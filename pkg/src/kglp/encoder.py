"""Feature-fusion encoders: shallow embeddings combined with projected text features."""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ValidationError


class EncoderVariant(str, Enum):
    """The four encoder designs, from plain concatenation to the weighted residual."""

    CONCAT = "concat"
    CONCAT_MLP = "concat-mlp"
    CONCAT_MLP_RESIDUAL_UNWEIGHTED = "concat-mlp-residual-unweighted"
    CONCAT_MLP_RESIDUAL = "concat-mlp-residual"

    @property
    def uses_mlp(self) -> bool:
        return self is not EncoderVariant.CONCAT


DENSE_NAMES: Tuple[str, ...] = ("proj_weight", "proj_bias", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2", "alpha")


def active_names(variant: EncoderVariant) -> Tuple[str, ...]:
    """Dense parameters that the variant's forward pass reads."""
    if variant is EncoderVariant.CONCAT:
        return ("proj_weight", "proj_bias")
    if variant is EncoderVariant.CONCAT_MLP_RESIDUAL:
        return DENSE_NAMES
    return DENSE_NAMES[:-1]


@dataclass
class ShallowTable:
    """Free per-row embeddings; the width must be even for the complex split."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValidationError(f"shallow table must be 2-D, got shape {self.data.shape}")
        if self.data.shape[1] % 2:
            raise ValidationError(f"shallow dimension must be even, got {self.data.shape[1]}")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class EncoderParams:
    """Linear projection, one-hidden-layer MLP and residual weight.

    Weights are stored (out, in). For the plain Concat variant the
    projection reads the concatenated [feature; shallow] vector, otherwise
    the feature vector alone. `alpha` is a 1-element array so optimizers can
    update it in place.
    """

    proj_weight: np.ndarray
    proj_bias: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    alpha: np.ndarray

    @property
    def dim(self) -> int:
        return self.proj_weight.shape[0]

    @property
    def hidden(self) -> int:
        return self.mlp_w1.shape[0]

    def dense(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams(**{k: v.astype(dtype, copy=True) for k, v in self.dense().items()})

    @classmethod
    def initialize(
        cls,
        rng: np.random.Generator,
        feature_dim: int,
        dim: int,
        hidden: int,
        variant: EncoderVariant,
        dtype=np.float32,
    ) -> "EncoderParams":
        if hidden < 1:
            raise ValidationError(f"hidden dimension must be >= 1, got {hidden}")

        def glorot(out_dim: int, in_dim: int) -> np.ndarray:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            return rng.uniform(-limit, limit, size=(out_dim, in_dim)).astype(dtype)

        proj_in = feature_dim + dim if variant is EncoderVariant.CONCAT else feature_dim
        return cls(
            proj_weight=glorot(dim, proj_in),
            proj_bias=np.zeros(dim, dtype=dtype),
            mlp_w1=glorot(hidden, 2 * dim),
            mlp_b1=np.zeros(hidden, dtype=dtype),
            mlp_w2=glorot(dim, hidden),
            mlp_b2=np.zeros(dim, dtype=dtype),
            alpha=np.ones(1, dtype=dtype),
        )


@dataclass
class EncoderCache:
    features: np.ndarray
    shallow: np.ndarray
    concat: np.ndarray
    hidden_pre: Optional[np.ndarray] = None
    hidden: Optional[np.ndarray] = None


def _residual_weight(params: EncoderParams, variant: EncoderVariant):
    if variant is EncoderVariant.CONCAT_MLP_RESIDUAL:
        return params.alpha[0]
    if variant is EncoderVariant.CONCAT_MLP_RESIDUAL_UNWEIGHTED:
        return 1.0
    return 0.0


def _check_dims(params: EncoderParams, features: np.ndarray, shallow: np.ndarray, variant: EncoderVariant) -> None:
    dim = params.dim
    if shallow.shape[-1] != dim:
        raise ValidationError(f"shallow rows have width {shallow.shape[-1]}, encoder expects {dim}")
    proj_in = params.proj_weight.shape[1]
    expected = proj_in - dim if variant is EncoderVariant.CONCAT else proj_in
    if features.shape[-1] != expected:
        raise ValidationError(f"feature rows have width {features.shape[-1]}, encoder expects {expected}")
    if variant.uses_mlp and params.mlp_w1.shape[1] != 2 * dim:
        raise ValidationError(f"MLP input width {params.mlp_w1.shape[1]} != 2 * {dim}")
    if len(features) != len(shallow):
        raise ValidationError("feature and shallow batches differ in length")


def encode_batch(
    params: EncoderParams, features: np.ndarray, shallow: np.ndarray, variant: EncoderVariant
) -> Tuple[np.ndarray, EncoderCache]:
    """Encode a batch of rows; returns (B, d) outputs and the cache for `encode_backward`."""
    _check_dims(params, features, shallow, variant)

    if variant is EncoderVariant.CONCAT:
        z = np.concatenate([features, shallow], axis=1)
        out = z @ params.proj_weight.T + params.proj_bias
        return out, EncoderCache(features, shallow, z)

    projected = features @ params.proj_weight.T + params.proj_bias
    z = np.concatenate([projected, shallow], axis=1)
    hidden_pre = z @ params.mlp_w1.T + params.mlp_b1
    hidden = np.maximum(hidden_pre, 0)
    out = hidden @ params.mlp_w2.T + params.mlp_b2
    weight = _residual_weight(params, variant)
    if weight != 0.0:
        out = out + weight * shallow
    return out, EncoderCache(features, shallow, z, hidden_pre, hidden)


def encode_backward(
    params: EncoderParams, cache: EncoderCache, grad_out: np.ndarray, variant: EncoderVariant
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Gradients of the active dense parameters and of the shallow rows."""
    dim = params.dim
    if variant is EncoderVariant.CONCAT:
        grads = {
            "proj_weight": grad_out.T @ cache.concat,
            "proj_bias": grad_out.sum(axis=0),
        }
        d_concat = grad_out @ params.proj_weight
        return grads, d_concat[:, -dim:]

    grads = {
        "mlp_w2": grad_out.T @ cache.hidden,
        "mlp_b2": grad_out.sum(axis=0),
    }
    d_hidden = (grad_out @ params.mlp_w2) * (cache.hidden_pre > 0)
    grads["mlp_w1"] = d_hidden.T @ cache.concat
    grads["mlp_b1"] = d_hidden.sum(axis=0)
    d_concat = d_hidden @ params.mlp_w1
    d_projected = d_concat[:, :dim]
    grads["proj_weight"] = d_projected.T @ cache.features
    grads["proj_bias"] = d_projected.sum(axis=0)

    d_shallow = d_concat[:, dim:]
    weight = _residual_weight(params, variant)
    if weight != 0.0:
        d_shallow = d_shallow + weight * grad_out
    if variant is EncoderVariant.CONCAT_MLP_RESIDUAL:
        grads["alpha"] = np.array([np.sum(grad_out * cache.shallow)], dtype=grad_out.dtype)
    return grads, d_shallow


def encode(
    params: EncoderParams, feature_row: np.ndarray, shallow_row: np.ndarray, variant: EncoderVariant
) -> np.ndarray:
    """Encode a single entity or relation."""
    feature_row = np.asarray(feature_row, dtype=params.proj_weight.dtype).reshape(1, -1)
    shallow_row = np.asarray(shallow_row, dtype=params.proj_weight.dtype).reshape(1, -1)
    out, _ = encode_batch(params, feature_row, shallow_row, EncoderVariant(variant))
    return out[0]
