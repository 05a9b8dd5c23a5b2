"""Closed Horn rules: exhaustive chain-rule mining and sparse boolean application.

Rules are chain-normalized: `head(x, z) <= b1(x, y) & b2(y, z)` or
`head(x, y) <= b1(x, y)`. Any other orientation is expressed with inverse
relations, so mining expects an inverse-augmented store.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ValidationError
from .store import TripleStore, add_inverse_relations, fold_inverse_triples, sample_subgraphs
from .utils import parallel_map, write_json

logger = logging.getLogger(__name__)

RuleKey = Tuple[int, Tuple[int, ...]]


@dataclass(frozen=True)
class HornRule:
    head: int
    body: Tuple[int, ...]
    support: int
    body_count: int
    confidence: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "body", tuple(int(b) for b in self.body))
        if len(self.body) not in (1, 2):
            raise ValidationError(f"rule body must have 1 or 2 atoms, got {len(self.body)}")
        if not 0 <= self.support <= self.body_count:
            raise ValidationError(f"rule support {self.support} must lie in [0, body_count={self.body_count}]")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"rule confidence {self.confidence} outside [0, 1]")

    @classmethod
    def from_counts(cls, head: int, body: Sequence[int], support: int, body_count: int) -> "HornRule":
        confidence = support / body_count if body_count > 0 else 0.0
        return cls(int(head), tuple(body), int(support), int(body_count), confidence)

    @property
    def key(self) -> RuleKey:
        return (self.head, self.body)

    @property
    def relations(self) -> Tuple[int, ...]:
        return (self.head, *self.body)

    def __str__(self) -> str:
        if len(self.body) == 1:
            return f"r{self.head}(x,y) <= r{self.body[0]}(x,y)"
        return f"r{self.head}(x,z) <= r{self.body[0]}(x,y) & r{self.body[1]}(y,z)"


class RuleSet:
    """Ordered rules with unique (head, body) keys."""

    def __init__(self, rules: Iterable[HornRule] = ()):
        self._rules: Tuple[HornRule, ...] = tuple(rules)
        keys = [r.key for r in self._rules]
        if len(set(keys)) != len(keys):
            seen = set()
            dup = next(k for k in keys if k in seen or seen.add(k))
            raise ValidationError(f"duplicate rule {dup} in rule set")
        self._keys = frozenset(keys)

    def __len__(self) -> int:
        return len(self._rules)

    def __iter__(self) -> Iterator[HornRule]:
        return iter(self._rules)

    def __contains__(self, key) -> bool:
        return (key.key if isinstance(key, HornRule) else key) in self._keys

    def __eq__(self, other) -> bool:
        return isinstance(other, RuleSet) and self._rules == other._rules

    def __repr__(self) -> str:
        return f"RuleSet({len(self)} rules)"

    @property
    def rules(self) -> Tuple[HornRule, ...]:
        return self._rules

    def keys(self) -> frozenset:
        return self._keys

    def get(self, head: int, body: Sequence[int]) -> Optional[HornRule]:
        key = (int(head), tuple(int(b) for b in body))
        return next((r for r in self._rules if r.key == key), None)


# --- sparse helpers --------------------------------------------------------------------

def bool_product(left: sp.csr_matrix, right: sp.csr_matrix) -> sp.csr_matrix:
    """Boolean-semiring product: (i, j) is set iff some k has left[i, k] and right[k, j]."""
    counts = sp.csr_matrix(left.astype(np.int32) @ right.astype(np.int32))
    counts.eliminate_zeros()
    out = counts.astype(bool)
    out.sort_indices()
    return out


def _body_matrix(store: TripleStore, body: Tuple[int, ...]) -> sp.csr_matrix:
    if len(body) == 1:
        return store.relation_matrix(body[0])
    return bool_product(store.relation_matrix(body[0]), store.relation_matrix(body[1]))


def _overlap(a: sp.csr_matrix, b: sp.csr_matrix) -> int:
    return int(a.multiply(b).count_nonzero())


# --- mining ---------------------------------------------------------------------------

def mine_rules(
    store: TripleStore,
    min_support: int = 2,
    min_conf: float = 0.0,
    workers: int = 1,
) -> RuleSet:
    """All chain rules of length <= 3 meeting both thresholds, with set-semantics counts.

    Bodies whose body count falls below `min_support` are pruned before any
    head is tried. Head relations are scored in parallel when `workers > 1`;
    the output order (head, body length, body ids) does not depend on it.
    """
    if not 0.0 <= min_conf <= 1.0:
        raise ValidationError(f"min_conf must lie in [0, 1], got {min_conf}")
    floor = max(1, int(min_support))
    rels = [r for r in range(store.num_relations) if store.relation_size(r) > 0]

    bodies: List[Tuple[Tuple[int, ...], sp.csr_matrix, int]] = []
    for b in rels:
        m = store.relation_matrix(b)
        if m.nnz >= floor:
            bodies.append(((b,), m, int(m.nnz)))
    for a in rels:
        for b in rels:
            m = bool_product(store.relation_matrix(a), store.relation_matrix(b))
            if m.nnz >= floor:
                bodies.append(((a, b), m, int(m.nnz)))

    def rules_for_head(head: int) -> List[HornRule]:
        head_m = store.relation_matrix(head)
        found = []
        for body, m, body_count in bodies:
            if body == (head,):
                continue
            support = _overlap(m, head_m)
            if support < floor:
                continue
            rule = HornRule.from_counts(head, body, support, body_count)
            if rule.confidence >= min_conf:
                found.append(rule)
        return found

    per_head = parallel_map(rules_for_head, rels, workers)
    mined = [r for rules in per_head for r in rules]
    logger.debug(f"mined {len(mined)} rules from {len(bodies)} candidate bodies over {len(rels)} relations")
    return RuleSet(mined)


def _check_rule_relations(rule: HornRule, store: TripleStore) -> None:
    for rel in rule.relations:
        if not 0 <= rel < store.num_relations:
            raise ValidationError(f"rule {rule} uses relation {rel}, but the graph has {store.num_relations}")


def apply_rule(rule: HornRule, store: TripleStore) -> np.ndarray:
    """New (x, head, z) triples implied by the body and absent from the head relation.

    Returned as an (n, 3) array sorted by (x, z).
    """
    _check_rule_relations(rule, store)
    body = _body_matrix(store, rule.body).astype(np.int8)
    fresh = sp.csr_matrix(body - body.multiply(store.relation_matrix(rule.head).astype(np.int8)))
    fresh.eliminate_zeros()
    coo = fresh.tocoo()
    order = np.lexsort((coo.col, coo.row))
    rows, cols = coo.row[order].astype(np.int64), coo.col[order].astype(np.int64)
    return np.stack([rows, np.full(len(rows), rule.head, dtype=np.int64), cols], axis=1)


def merge_rulesets(sets: Sequence[RuleSet]) -> RuleSet:
    """Union by (head, body); a collision keeps the entry with the larger body count."""
    merged: Dict[RuleKey, HornRule] = {}
    for ruleset in sets:
        for rule in ruleset:
            kept = merged.get(rule.key)
            if kept is None or rule.body_count > kept.body_count:
                merged[rule.key] = rule
    return RuleSet(merged.values())


def filter_by_confidence(ruleset: RuleSet, threshold: float) -> RuleSet:
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"confidence threshold must lie in [0, 1], got {threshold}")
    return RuleSet(r for r in ruleset if r.confidence >= threshold)


def confidence_report(ruleset: RuleSet, thresholds: Sequence[float]) -> Dict[str, int]:
    """Rule counts at each confidence threshold, keyed by the threshold as written."""
    return {f"{t:g}": len(filter_by_confidence(ruleset, t)) for t in thresholds}


def augment(store: TripleStore, ruleset: RuleSet, threshold: float, workers: int = 1) -> Tuple[TripleStore, int]:
    """Apply every rule with confidence >= threshold to `store` and union the predictions in."""
    rules = list(filter_by_confidence(ruleset, threshold))
    if not rules:
        return store, 0
    predicted = parallel_map(lambda rule: apply_rule(rule, store), rules, workers)
    augmented = store.with_triples(np.concatenate(predicted))
    added = len(augmented) - len(store)
    logger.info(f"{len(rules)} rules at confidence >= {threshold} added {added} triples")
    return augmented, added


def augment_base(
    store: TripleStore, ruleset: RuleSet, threshold: float, workers: int = 1
) -> Tuple[TripleStore, np.ndarray]:
    """`augment` for a store holding base relations only.

    Rules may mention inverse ids (r + R), so they are applied on the
    inverse-augmented graph and every prediction is folded back onto its
    base relation. Returns the augmented base store and the new triples.
    """
    full = add_inverse_relations(store)
    augmented, _ = augment(full, ruleset, threshold, workers)
    folded = fold_inverse_triples(augmented.triples[len(full):], store.num_relations)
    fresh = np.array([t for t in folded.tolist() if t not in store], dtype=np.int64).reshape(-1, 3)
    if len(fresh):
        fresh = np.unique(fresh, axis=0)
    return store.with_triples(fresh), fresh


def mine_subgraph_rules(
    store: TripleStore,
    k: int,
    slice_len: Optional[int] = None,
    min_support: int = 2,
    min_conf: float = 0.0,
    workers: int = 1,
) -> Tuple[RuleSet, List[int]]:
    """Mine each of `k` sampled subgraphs, merge, then filter by `min_conf`.

    Returns the rule set and the raw rule count of every subgraph.
    """
    slice_len = len(store) if slice_len is None else slice_len
    if len(store) == 0:
        return RuleSet(), [0] * k
    subgraphs = sample_subgraphs(store, k, slice_len)
    mined = [mine_rules(sub, min_support, 0.0, workers) for sub in subgraphs]
    counts = [len(rs) for rs in mined]
    for i, count in enumerate(counts):
        logger.info(f"subgraph {i}: {count} rules")
    merged = filter_by_confidence(merge_rulesets(mined), min_conf)
    logger.info(f"merged {sum(counts)} raw rules into {len(merged)} at confidence >= {min_conf}")
    return merged, counts


# --- persistence ------------------------------------------------------------------------

def rule_to_dict(rule: HornRule) -> Dict:
    record = asdict(rule)
    record["body"] = list(rule.body)
    return record


def save_rules(path: Path, ruleset: RuleSet) -> None:
    write_json(path, [rule_to_dict(r) for r in ruleset])


def load_rules(path: Path) -> RuleSet:
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(path, f"invalid JSON: {e}") from e
    if not isinstance(records, list):
        raise FormatError(path, "rules file must hold a JSON array")
    rules = []
    for i, rec in enumerate(records):
        try:
            rules.append(
                HornRule(
                    int(rec["head"]),
                    tuple(rec["body"]),
                    int(rec["support"]),
                    int(rec["body_count"]),
                    float(rec["confidence"]),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(path, f"rule {i}: {e!r}") from e
        except ValidationError as e:
            raise FormatError(path, f"rule {i}: {e.message}") from e
    try:
        return RuleSet(rules)
    except ValidationError as e:
        raise FormatError(path, e.message) from e
