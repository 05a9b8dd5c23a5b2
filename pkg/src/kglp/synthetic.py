"""Seeded synthetic benchmark: relations are exact ComplEx rotations on a cyclic group.

Entity j of n gets the unit-norm latent with complex coordinates
exp(2*pi*i*f_k*j/n), one per frequency f_k (all coprime with n). A relation
with shift s maps j to j + s (mod n), which is the rotation of j's latent
by exp(2*pi*i*f_k*s/n); the tail is therefore the unique ComplEx best match
of the rotated head. A rule relation c = a . b carries the shift s_a + s_b,
so `c(x, z) <= a(x, y) & b(y, z)` holds with confidence 1.0 on the clean
graph. Shifts commute, so the reversed body holds as well. Shifts are
redrawn until no other pair of relations composes into a relation. Entity
features are noisy linear images of the latent vectors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .constants import (
    ENTITY_FEAT_FILE,
    PLANTED_RULES_FILE,
    RELATION_FEAT_FILE,
    SPEC_FILE,
    TEST_FILE,
    TRAIN_FILE,
    VALID_FILE,
)
from .errors import ValidationError
from .formats import CandidateSet, FeatureMatrix, save_candidates, save_features, save_triples
from .store import TripleStore
from .utils import write_json

logger = logging.getLogger(__name__)

RuleTemplate = Tuple[int, int, int]


@dataclass(frozen=True)
class SyntheticSpec:
    num_entities: int = 200
    # all relations, the planted rule relations included
    num_relations: int = 6
    num_rule_relations: int = 1
    # (head, body_a, body_b); empty => derived from the relation counts
    rule_templates: Tuple[RuleTemplate, ...] = ()
    noise_fraction: float = 0.0
    feature_dim: int = 16
    latent_dim: int = 16
    feature_noise: float = 0.05
    splits: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    num_candidates: int = 101
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "splits", tuple(float(s) for s in self.splits))
        object.__setattr__(self, "rule_templates", tuple(tuple(int(x) for x in t) for t in self.rule_templates))
        if self.num_entities < 2:
            raise ValidationError(f"need at least 2 entities, got {self.num_entities}")
        if not 0 <= self.num_rule_relations < self.num_relations:
            raise ValidationError(
                f"num_rule_relations must lie in [0, num_relations), got {self.num_rule_relations} of {self.num_relations}"
            )
        if self.latent_dim < 2 or self.latent_dim % 2:
            raise ValidationError(f"latent_dim must be a positive even number, got {self.latent_dim}")
        if self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if len(self.splits) != 3 or any(not 0.0 <= s <= 1.0 for s in self.splits) or sum(self.splits) > 1.0 + 1e-9:
            raise ValidationError(f"split fractions must lie in [0, 1] and sum to <= 1, got {self.splits}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValidationError(f"noise_fraction must lie in [0, 1], got {self.noise_fraction}")
        if not 1 <= self.num_candidates <= self.num_entities:
            raise ValidationError(
                f"num_candidates must lie in [1, {self.num_entities}], got {self.num_candidates}",
                "Lower num_candidates or add entities.",
            )
        base = self.num_base_relations
        for head, a, b in self.templates():
            if not (base <= head < self.num_relations and 0 <= a < base and 0 <= b < base):
                raise ValidationError(f"rule template {(head, a, b)} must compose two base relations into a rule relation")
        if len({t[0] for t in self.templates()}) != self.num_rule_relations:
            raise ValidationError("every rule relation needs exactly one template")

    @property
    def num_base_relations(self) -> int:
        return self.num_relations - self.num_rule_relations

    def templates(self) -> Tuple[RuleTemplate, ...]:
        if self.rule_templates:
            return self.rule_templates
        base = self.num_base_relations
        return tuple(
            (base + i, (2 * i) % base, (2 * i + 1) % base) for i in range(self.num_rule_relations)
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "SyntheticSpec":
        data = dict(data)
        if "splits" in data:
            data["splits"] = tuple(data["splits"])
        if "rule_templates" in data:
            data["rule_templates"] = tuple(tuple(t) for t in data["rule_templates"])
        try:
            return cls(**data)
        except TypeError as e:
            raise ValidationError(f"invalid synthetic spec: {e}") from e

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["splits"] = list(self.splits)
        out["rule_templates"] = [list(t) for t in self.templates()]
        return out


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    graph: TripleStore
    train: TripleStore
    valid: CandidateSet
    test: CandidateSet
    entity_features: FeatureMatrix
    relation_features: FeatureMatrix
    planted: List[RuleTemplate] = field(default_factory=list)
    # relation id -> tail offset; latent rows are the generating entity vectors
    shifts: Dict[int, int] = field(default_factory=dict)
    latent: Optional[np.ndarray] = None


# Redraws allowed while looking for relation shifts with no accidental compositions
SHIFT_ATTEMPTS = 1000


def _frequencies(rng: np.random.Generator, n: int, half: int) -> np.ndarray:
    """Latent frequencies coprime with n, so distinct entities get distinct latents."""
    pool = np.array([f for f in range(1, max(1, n // 2) + 1) if math.gcd(f, n) == 1])
    return rng.choice(pool, size=half, replace=len(pool) < half)


def _latent(n: int, freqs: np.ndarray) -> np.ndarray:
    angles = 2 * np.pi * np.outer(np.arange(n), freqs) / n
    return np.concatenate([np.cos(angles), np.sin(angles)], axis=1) / np.sqrt(len(freqs))


def _accidental(shifts: Dict[int, int], templates: Tuple[RuleTemplate, ...], n: int) -> bool:
    """True when two relations coincide or some unplanted pair composes into a relation."""
    values = list(shifts.values())
    if len(set(values)) != len(values):
        return True
    planted = {(head, tuple(sorted((a, b)))) for head, a, b in templates}
    by_shift = {s: rel for rel, s in shifts.items()}
    rels = sorted(shifts)
    for i, x in enumerate(rels):
        for y in rels[i:]:
            rel = by_shift.get((shifts[x] + shifts[y]) % n)
            if rel is not None and (rel, (x, y)) not in planted:
                return True
    return False


def _draw_shifts(rng: np.random.Generator, spec: SyntheticSpec) -> Dict[int, int]:
    n, templates = spec.num_entities, spec.templates()
    for _ in range(SHIFT_ATTEMPTS):
        shifts = {rel: int(s) for rel, s in enumerate(rng.integers(1, n, size=spec.num_base_relations))}
        for head, a, b in templates:
            shifts[head] = (shifts[a] + shifts[b]) % n
        if 0 not in shifts.values() and not _accidental(shifts, templates, n):
            return shifts
    logger.warning(
        f"{spec.num_relations} relations on {n} entities: could not avoid accidental compositions, "
        "unplanted rules may hold"
    )
    return shifts


def _candidate_set(rng: np.random.Generator, triples: np.ndarray, num_entities: int, k: int) -> CandidateSet:
    rows, truth = [], []
    for h, r, t in triples.tolist():
        distractors = rng.choice(num_entities - 1, size=k - 1, replace=False)
        distractors[distractors >= t] += 1
        pos = int(rng.integers(0, k))
        rows.append(np.insert(distractors, pos, t))
        truth.append(pos)
    return CandidateSet(triples[:, 0], triples[:, 1], rows, truth)


def generate_synthetic(spec: SyntheticSpec, out_dir: Optional[Path] = None) -> SyntheticDataset:
    """Build the dataset for `spec`; when `out_dir` is given, also write it there."""
    rng = np.random.default_rng(spec.seed)
    n, half = spec.num_entities, spec.latent_dim // 2

    latent = _latent(n, _frequencies(rng, n, half))
    shifts = _draw_shifts(rng, spec)
    maps: Dict[int, np.ndarray] = {rel: (np.arange(n) + s) % n for rel, s in shifts.items()}

    heads = np.arange(n, dtype=np.int64)
    clean = np.concatenate(
        [np.stack([heads, np.full(n, rel, dtype=np.int64), maps[rel]], axis=1) for rel in range(spec.num_relations)]
    )
    n_noise = int(round(spec.noise_fraction * len(clean)))
    noise = np.stack(
        [
            rng.integers(0, n, size=n_noise),
            rng.integers(0, spec.num_relations, size=n_noise),
            rng.integers(0, n, size=n_noise),
        ],
        axis=1,
    ).astype(np.int64)
    graph = TripleStore(np.concatenate([clean, noise]), n, spec.num_relations)

    order = rng.permutation(len(graph))
    total = len(order)
    n_train = int(round(spec.splits[0] * total))
    n_valid = min(int(round(spec.splits[1] * total)), total - n_train)
    n_test = min(int(round(spec.splits[2] * total)), total - n_train - n_valid)
    triples = graph.triples
    train = TripleStore(triples[order[:n_train]], n, spec.num_relations)
    valid = _candidate_set(rng, triples[order[n_train:n_train + n_valid]], n, spec.num_candidates)
    test = _candidate_set(rng, triples[order[n_train + n_valid:n_train + n_valid + n_test]], n, spec.num_candidates)

    projection = rng.standard_normal((spec.latent_dim, spec.feature_dim)) / np.sqrt(spec.latent_dim)
    entity_features = FeatureMatrix(
        latent @ projection + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))
    )
    relation_features = FeatureMatrix(rng.standard_normal((spec.num_relations, spec.feature_dim)))

    dataset = SyntheticDataset(
        spec, graph, train, valid, test, entity_features, relation_features, list(spec.templates()), shifts, latent
    )
    logger.info(
        f"Synthetic KG: {n} entities, {spec.num_relations} relations, {len(graph)} triples "
        f"({n_noise} noise) -> train {len(train)} / valid {len(valid)} / test {len(test)}"
    )
    if out_dir is not None:
        write_dataset(dataset, out_dir)
    return dataset


def write_dataset(dataset: SyntheticDataset, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_triples(out_dir / TRAIN_FILE, dataset.train)
    save_candidates(out_dir / VALID_FILE, dataset.valid)
    save_candidates(out_dir / TEST_FILE, dataset.test)
    save_features(out_dir / ENTITY_FEAT_FILE, dataset.entity_features)
    save_features(out_dir / RELATION_FEAT_FILE, dataset.relation_features)
    write_json(out_dir / SPEC_FILE, dataset.spec.to_dict())
    write_json(
        out_dir / PLANTED_RULES_FILE,
        [{"head": h, "body": [a, b]} for h, a, b in dataset.planted],
    )
    return out_dir
