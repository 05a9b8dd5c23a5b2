"""Triple storage: deduplicated edge list with per-relation CSR adjacency."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional

import numpy as np
import scipy.sparse as sp

from .constants import MAX_ID
from .errors import ValidationError


@dataclass(frozen=True)
class Triple:
    head: int
    rel: int
    tail: int


def _as_triple_array(triples) -> np.ndarray:
    arr = np.asarray(triples, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"triples must have shape (n, 3), got {arr.shape}")
    return arr


def _dedup_stable(arr: np.ndarray) -> np.ndarray:
    if len(arr) == 0:
        return arr
    _, first = np.unique(arr, axis=0, return_index=True)
    return arr[np.sort(first)]


class TripleStore:
    """An immutable knowledge graph over integer ids.

    Duplicates are dropped at construction (first occurrence wins the
    position), and one boolean CSR matrix per relation is built eagerly so
    concurrent readers never race on a lazy cache.
    """

    def __init__(
        self,
        triples,
        num_entities: Optional[int] = None,
        num_relations: Optional[int] = None,
    ):
        arr = _dedup_stable(_as_triple_array(triples))
        if len(arr) and arr.min() < 0:
            raise ValidationError("triple ids must be non-negative")
        if len(arr) and arr.max() > MAX_ID:
            raise ValidationError(f"triple id {int(arr.max())} exceeds the 32-bit id range (max {MAX_ID})")

        seen_entities = int(max(arr[:, 0].max(), arr[:, 2].max())) + 1 if len(arr) else 0
        seen_relations = int(arr[:, 1].max()) + 1 if len(arr) else 0
        self.num_entities = seen_entities if num_entities is None else int(num_entities)
        self.num_relations = seen_relations if num_relations is None else int(num_relations)
        if max(self.num_entities, self.num_relations) > MAX_ID + 1:
            raise ValidationError(
                f"{self.num_entities} entities / {self.num_relations} relations exceed the 32-bit id range"
            )
        if seen_entities > self.num_entities:
            raise ValidationError(
                f"entity id {seen_entities - 1} out of range for {self.num_entities} entities"
            )
        if seen_relations > self.num_relations:
            raise ValidationError(
                f"relation id {seen_relations - 1} out of range for {self.num_relations} relations"
            )

        arr.setflags(write=False)
        self._triples = arr
        self._matrices: Dict[int, sp.csr_matrix] = self._build_index()

    def _build_index(self) -> Dict[int, sp.csr_matrix]:
        n = self.num_entities
        matrices = {}
        for rel in range(self.num_relations):
            mask = self._triples[:, 1] == rel
            rows = self._triples[mask, 0]
            cols = self._triples[mask, 2]
            mat = sp.csr_matrix(
                (np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n), dtype=bool
            )
            mat.sort_indices()
            matrices[rel] = mat
        return matrices

    @property
    def triples(self) -> np.ndarray:
        """Read-only (n, 3) array of (head, rel, tail) rows."""
        return self._triples

    @property
    def heads(self) -> np.ndarray:
        return self._triples[:, 0]

    @property
    def rels(self) -> np.ndarray:
        return self._triples[:, 1]

    @property
    def tails(self) -> np.ndarray:
        return self._triples[:, 2]

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        for h, r, t in self._triples.tolist():
            yield Triple(h, r, t)

    def __contains__(self, triple) -> bool:
        h, r, t = (triple.head, triple.rel, triple.tail) if isinstance(triple, Triple) else triple
        if not (0 <= r < self.num_relations and 0 <= h < self.num_entities and 0 <= t < self.num_entities):
            return False
        return bool(self._matrices[r][h, t])

    def __repr__(self) -> str:
        return (
            f"TripleStore(triples={len(self)}, entities={self.num_entities}, "
            f"relations={self.num_relations})"
        )

    def relation_matrix(self, rel: int) -> sp.csr_matrix:
        """|E|x|E| boolean adjacency of `rel`: entry (i, j) set iff (i, rel, j) is stored."""
        if not 0 <= rel < self.num_relations:
            raise ValidationError(f"relation id {rel} out of range for {self.num_relations} relations")
        return self._matrices[rel]

    def relation_size(self, rel: int) -> int:
        return int(self.relation_matrix(rel).nnz)

    def with_triples(self, extra) -> "TripleStore":
        """A new store holding these triples followed by `extra` (deduplicated)."""
        extra = _as_triple_array(extra)
        return TripleStore(
            np.concatenate([self._triples, extra]), self.num_entities, self.num_relations
        )


def add_inverse_relations(store: TripleStore) -> TripleStore:
    """Double the relation set: (t, r + R, h) is added for every (h, r, t)."""
    num_rel = store.num_relations
    arr = store.triples
    inverse = np.stack([arr[:, 2], arr[:, 1] + num_rel, arr[:, 0]], axis=1)
    return TripleStore(np.concatenate([arr, inverse]), store.num_entities, 2 * num_rel)


def fold_inverse_triples(triples, num_base_relations: int) -> np.ndarray:
    """Rewrite (h, r + R, t) rows as (t, r, h); base rows pass through."""
    arr = _as_triple_array(triples).copy()
    inv = arr[:, 1] >= num_base_relations
    arr[inv] = np.stack(
        [arr[inv, 2], arr[inv, 1] - num_base_relations, arr[inv, 0]], axis=1
    )
    return _dedup_stable(arr)


def subgraph_offsets(total: int, k: int) -> List[int]:
    return [(i * total) // k for i in range(k)]


def sample_subgraphs(store: TripleStore, k: int, slice_len: int) -> List[TripleStore]:
    """`k` contiguous slices of the triple list at evenly spaced starts, wrapping past the end."""
    total = len(store)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if slice_len < 1:
        raise ValidationError("slice_len must be >= 1", "Pass a positive --slice-len.")
    if slice_len > total:
        raise ValidationError(f"slice_len {slice_len} exceeds the {total} stored triples")

    subgraphs = []
    for start in subgraph_offsets(total, k):
        idx = (start + np.arange(slice_len)) % total
        subgraphs.append(TripleStore(store.triples[idx], store.num_entities, store.num_relations))
    return subgraphs
