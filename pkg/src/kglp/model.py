"""ComplEx-CMRC scoring model: two encoders (entities, relations) and a decoder.

Forward and backward passes work on a flat candidate batch: query q has
head `heads[q]` and relation `rels[q]`, and candidate entry j belongs to
query `owner[j]`. Rectangular batches (training) and ragged candidate
sets (inference, distillation) share the same code path.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self

from .decoder import Decoder, query_backward, query_vectors
from .encoder import (
    EncoderCache,
    EncoderParams,
    EncoderVariant,
    ShallowTable,
    active_names,
    encode_backward,
    encode_batch,
)
from .errors import ValidationError
from .formats import CandidateSet, FeatureMatrix

logger = logging.getLogger(__name__)

SIDES = ("entity", "relation")


@dataclass(frozen=True)
class Features:
    """Entity features and base-relation features (inverse relations reuse their base row)."""

    entity: FeatureMatrix
    relation: FeatureMatrix


@dataclass
class ModelParams:
    entity_encoder: EncoderParams
    entity_shallow: ShallowTable
    relation_encoder: EncoderParams
    relation_shallow: ShallowTable
    variant: EncoderVariant
    decoder: Decoder
    num_base_relations: int
    inverse_relations: bool = True

    def __post_init__(self) -> None:
        self.variant = EncoderVariant(self.variant)
        self.decoder = Decoder(self.decoder)
        expected = 2 * self.num_base_relations if self.inverse_relations else self.num_base_relations
        if self.relation_shallow.rows != expected:
            raise ValidationError(
                f"relation table has {self.relation_shallow.rows} rows, expected {expected}"
            )
        if self.entity_shallow.dim != self.relation_shallow.dim:
            raise ValidationError("entity and relation embeddings differ in dimension")

    @property
    def dim(self) -> int:
        return self.entity_shallow.dim

    @property
    def num_entities(self) -> int:
        return self.entity_shallow.rows

    @property
    def num_relations(self) -> int:
        return self.relation_shallow.rows

    @property
    def dtype(self):
        return self.entity_shallow.data.dtype

    def encoder(self, side: str) -> EncoderParams:
        return self.entity_encoder if side == "entity" else self.relation_encoder

    def shallow(self, side: str) -> ShallowTable:
        return self.entity_shallow if side == "entity" else self.relation_shallow

    def relation_feature_rows(self, rels: np.ndarray) -> np.ndarray:
        """Feature row of each relation id; r and its inverse r + R share a row."""
        return np.asarray(rels) % self.num_base_relations

    def copy(self) -> Self:
        return copy.deepcopy(self)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            entity_encoder=self.entity_encoder.astype(dtype),
            entity_shallow=ShallowTable(self.entity_shallow.data.astype(dtype, copy=True)),
            relation_encoder=self.relation_encoder.astype(dtype),
            relation_shallow=ShallowTable(self.relation_shallow.data.astype(dtype, copy=True)),
            variant=self.variant,
            decoder=self.decoder,
            num_base_relations=self.num_base_relations,
            inverse_relations=self.inverse_relations,
        )

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Every trainable array of this variant, shallow tables included."""
        for side in SIDES:
            yield f"{side}.shallow", self.shallow(side).data
            enc = self.encoder(side)
            for name in active_names(self.variant):
                yield f"{side}.{name}", getattr(enc, name)

    def check_features(self, features: Features) -> None:
        features.entity.bind(self.num_entities, "entities")
        features.relation.bind(self.num_base_relations, "base relations")


def init_model(
    rng: np.random.Generator,
    num_entities: int,
    num_base_relations: int,
    features: Features,
    dim: int,
    hidden: int,
    variant: EncoderVariant = EncoderVariant.CONCAT_MLP_RESIDUAL,
    decoder: Decoder = Decoder.COMPLEX,
    inverse_relations: bool = True,
    dtype=np.float32,
) -> ModelParams:
    """Fresh parameters: shallow rows U(-1/sqrt(d), 1/sqrt(d)), Glorot dense weights, alpha = 1."""
    if dim % 2:
        raise ValidationError(f"embedding dimension must be even, got {dim}")
    variant = EncoderVariant(variant)
    num_relations = 2 * num_base_relations if inverse_relations else num_base_relations
    bound = 1.0 / np.sqrt(dim)
    entity_shallow = rng.uniform(-bound, bound, size=(num_entities, dim)).astype(dtype)
    relation_shallow = rng.uniform(-bound, bound, size=(num_relations, dim)).astype(dtype)
    model = ModelParams(
        entity_encoder=EncoderParams.initialize(rng, features.entity.cols, dim, hidden, variant, dtype),
        entity_shallow=ShallowTable(entity_shallow),
        relation_encoder=EncoderParams.initialize(rng, features.relation.cols, dim, hidden, variant, dtype),
        relation_shallow=ShallowTable(relation_shallow),
        variant=variant,
        decoder=Decoder(decoder),
        num_base_relations=num_base_relations,
        inverse_relations=inverse_relations,
    )
    model.check_features(features)
    return model


# --- batches -----------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateBatch:
    heads: np.ndarray
    rels: np.ndarray
    candidates: np.ndarray
    owner: np.ndarray

    @classmethod
    def rectangular(cls, heads, rels, candidates) -> "CandidateBatch":
        candidates = np.asarray(candidates, dtype=np.int64)
        n_queries, width = candidates.shape
        return cls(
            np.asarray(heads, dtype=np.int64),
            np.asarray(rels, dtype=np.int64),
            candidates.reshape(-1),
            np.repeat(np.arange(n_queries, dtype=np.int64), width),
        )

    @classmethod
    def from_candidate_set(cls, cands: CandidateSet) -> "CandidateBatch":
        return cls(cands.heads, cands.rels, cands.flat, cands.owner)

    def __len__(self) -> int:
        return len(self.heads)


@dataclass
class ForwardCache:
    batch: CandidateBatch
    entity_ids: np.ndarray
    relation_ids: np.ndarray
    head_pos: np.ndarray
    cand_pos: np.ndarray
    rel_pos: np.ndarray
    entity_out: np.ndarray
    relation_out: np.ndarray
    entity_cache: EncoderCache
    relation_cache: EncoderCache
    queries: np.ndarray


@dataclass
class SideGradients:
    dense: Dict[str, np.ndarray]
    rows: np.ndarray
    shallow: np.ndarray


@dataclass
class Gradients:
    entity: SideGradients
    relation: SideGradients

    def side(self, name: str) -> SideGradients:
        return self.entity if name == "entity" else self.relation

    def arrays(self) -> Iterator[Tuple[str, np.ndarray]]:
        for side in SIDES:
            g = self.side(side)
            yield f"{side}.shallow", g.shallow
            for name, arr in g.dense.items():
                yield f"{side}.{name}", arr

    def full(self, model: ModelParams) -> Dict[str, np.ndarray]:
        """Dense copies shaped like `model.named_parameters()`; untouched rows are zero."""
        out = {}
        for side in SIDES:
            g = self.side(side)
            table = np.zeros_like(model.shallow(side).data)
            np.add.at(table, g.rows, g.shallow)
            out[f"{side}.shallow"] = table
            for name in active_names(model.variant):
                out[f"{side}.{name}"] = g.dense.get(name, np.zeros_like(getattr(model.encoder(side), name)))
        return out


def _check_ids(model: ModelParams, batch: CandidateBatch) -> None:
    for name, ids, limit in (
        ("head", batch.heads, model.num_entities),
        ("candidate", batch.candidates, model.num_entities),
        ("relation", batch.rels, model.num_relations),
    ):
        if len(ids) and (ids.min() < 0 or ids.max() >= limit):
            raise ValidationError(f"{name} id out of range [0, {limit})")


def forward(model: ModelParams, features: Features, batch: CandidateBatch) -> Tuple[np.ndarray, ForwardCache]:
    """Scores of every flat candidate entry, plus the cache for `backward`."""
    _check_ids(model, batch)
    dtype = model.dtype

    entity_ids = np.unique(np.concatenate([batch.heads, batch.candidates]))
    head_pos = np.searchsorted(entity_ids, batch.heads)
    cand_pos = np.searchsorted(entity_ids, batch.candidates)
    entity_out, entity_cache = encode_batch(
        model.entity_encoder,
        features.entity.data[entity_ids].astype(dtype, copy=False),
        model.entity_shallow.data[entity_ids],
        model.variant,
    )

    relation_ids = np.unique(batch.rels)
    rel_pos = np.searchsorted(relation_ids, batch.rels)
    relation_out, relation_cache = encode_batch(
        model.relation_encoder,
        features.relation.data[model.relation_feature_rows(relation_ids)].astype(dtype, copy=False),
        model.relation_shallow.data[relation_ids],
        model.variant,
    )

    queries = query_vectors(model.decoder, entity_out[head_pos], relation_out[rel_pos])
    scores = np.einsum("md,md->m", queries[batch.owner], entity_out[cand_pos])
    cache = ForwardCache(
        batch, entity_ids, relation_ids, head_pos, cand_pos, rel_pos,
        entity_out, relation_out, entity_cache, relation_cache, queries,
    )
    return scores, cache


def backward(model: ModelParams, cache: ForwardCache, grad_scores: np.ndarray) -> Gradients:
    """Analytic gradients of sum(grad_scores * scores) for every parameter the forward pass read."""
    batch = cache.batch
    grad_scores = np.asarray(grad_scores, dtype=model.dtype).reshape(-1)
    if grad_scores.shape != batch.candidates.shape:
        raise ValidationError(f"expected {len(batch.candidates)} score gradients, got {grad_scores.shape[0]}")

    tails = cache.entity_out[cache.cand_pos]
    grad_queries = np.zeros_like(cache.queries)
    np.add.at(grad_queries, batch.owner, grad_scores[:, None] * tails)
    grad_tails = grad_scores[:, None] * cache.queries[batch.owner]

    grad_heads, grad_rels = query_backward(
        model.decoder,
        cache.entity_out[cache.head_pos],
        cache.relation_out[cache.rel_pos],
        grad_queries,
    )

    grad_entity_out = np.zeros_like(cache.entity_out)
    np.add.at(grad_entity_out, cache.head_pos, grad_heads)
    np.add.at(grad_entity_out, cache.cand_pos, grad_tails)
    grad_relation_out = np.zeros_like(cache.relation_out)
    np.add.at(grad_relation_out, cache.rel_pos, grad_rels)

    entity_dense, entity_rows = encode_backward(
        model.entity_encoder, cache.entity_cache, grad_entity_out, model.variant
    )
    relation_dense, relation_rows = encode_backward(
        model.relation_encoder, cache.relation_cache, grad_relation_out, model.variant
    )
    return Gradients(
        entity=SideGradients(entity_dense, cache.entity_ids, entity_rows),
        relation=SideGradients(relation_dense, cache.relation_ids, relation_rows),
    )


def score_candidates(model: ModelParams, features: Features, query: Tuple[int, int], candidates: Sequence[int]) -> np.ndarray:
    """Decoder scores of (head, rel, c) for each candidate c, in candidate order."""
    head, rel = query
    candidates = np.asarray(candidates, dtype=np.int64).reshape(1, -1)
    if candidates.size == 0:
        return np.zeros(0, dtype=model.dtype)
    scores, _ = forward(model, features, CandidateBatch.rectangular([head], [rel], candidates))
    return scores


# --- gradient checking ----------------------------------------------------------------

def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def grad_check(
    model: ModelParams,
    features: Features,
    batch: CandidateBatch,
    epsilon: float = 1e-4,
    grad_scores: Optional[np.ndarray] = None,
    max_coords: int = 4000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between `backward` and central finite differences.

    Runs on a 64-bit copy of the model. Every coordinate is perturbed when
    the model has at most `max_coords` of them; otherwise a random subset of
    `max_coords` (never fewer than 200) is checked.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    rng = rng or np.random.default_rng(0)
    shadow = model.astype(np.float64)
    shadow_features = Features(
        FeatureMatrix(features.entity.data), FeatureMatrix(features.relation.data)
    )

    scores, cache = forward(shadow, shadow_features, batch)
    if grad_scores is None:
        grad_scores = rng.standard_normal(scores.shape)
    grad_scores = np.asarray(grad_scores, dtype=np.float64)
    analytic = backward(shadow, cache, grad_scores).full(shadow)

    def objective() -> float:
        values, _ = forward(shadow, shadow_features, batch)
        return float(np.dot(grad_scores, values))

    params: List[Tuple[str, np.ndarray]] = list(shadow.named_parameters())
    coords = [(i, j) for i, (_, arr) in enumerate(params) for j in range(arr.size)]
    limit = max(200, max_coords)
    if len(coords) > limit:
        picks = rng.choice(len(coords), size=limit, replace=False)
        coords = [coords[k] for k in np.sort(picks)]

    worst = 0.0
    for i, j in coords:
        name, arr = params[i]
        flat = arr.reshape(-1)
        saved = flat[j]
        flat[j] = saved + epsilon
        plus = objective()
        flat[j] = saved - epsilon
        minus = objective()
        flat[j] = saved
        numeric = (plus - minus) / (2 * epsilon)
        err = relative_error(float(analytic[name].reshape(-1)[j]), numeric)
        if err > worst:
            worst = err
            logger.debug(f"grad_check: {name}[{j}] analytic={analytic[name].reshape(-1)[j]:.6g} numeric={numeric:.6g}")
    return worst
