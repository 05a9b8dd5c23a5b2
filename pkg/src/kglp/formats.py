"""Flat-file formats: triples TSV, f32le matrices with JSON sidecars, candidate lists."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .constants import F32_DTYPE, MAX_ID, META_SUFFIX
from .errors import FormatError, ValidationError
from .store import TripleStore
from .utils import write_json


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + META_SUFFIX)


def read_sidecar(path: Path, required: bool = True) -> Optional[Dict[str, Any]]:
    meta = sidecar_path(path)
    if not meta.exists():
        if required:
            raise FormatError(meta, "missing JSON sidecar", suggestion=f"Expected {meta.name} next to {Path(path).name}.")
        return None
    try:
        data = json.loads(meta.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(meta, f"invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise FormatError(meta, "sidecar must be a JSON object")
    return data


# --- triples -----------------------------------------------------------------

def _parse_id(token: str, path: Path, lineno: int) -> int:
    if not (token.isascii() and token.isdigit()):
        raise FormatError(path, f"expected a non-negative base-10 integer, got {token!r}", line=lineno)
    value = int(token)
    if value > MAX_ID:
        raise FormatError(path, f"id {token} overflows the 32-bit id range (max {MAX_ID})", line=lineno)
    return value


def load_triples(path: Path) -> TripleStore:
    """Read a `head<TAB>rel<TAB>tail` file; counts come from the sidecar when present."""
    path = Path(path)
    rows: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(path, f"expected 3 tab-separated fields, got {len(parts)}", line=lineno)
            rows.append(tuple(_parse_id(p, path, lineno) for p in parts))

    meta = read_sidecar(path, required=False) or {}
    try:
        return TripleStore(rows, meta.get("num_entities"), meta.get("num_relations"))
    except ValidationError as e:
        raise FormatError(path, e.message, suggestion="Check the graph sidecar counts.") from e


def save_triples(path: Path, store: TripleStore) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for h, r, t in store.triples.tolist():
            f.write(f"{h}\t{r}\t{t}\n")
    write_json(sidecar_path(path), {"num_entities": store.num_entities, "num_relations": store.num_relations})


# --- dense f32le matrices --------------------------------------------------------

def write_f32_matrix(path: Path, data: np.ndarray, extra: Optional[Dict[str, Any]] = None) -> None:
    data = np.asarray(data)
    if data.ndim == 1:
        data = data.reshape(1, -1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(data, dtype="<f4").tofile(path)
    meta = {"rows": int(data.shape[0]), "cols": int(data.shape[1]), "dtype": F32_DTYPE}
    meta.update(extra or {})
    write_json(sidecar_path(path), meta)


def read_f32_matrix(path: Path) -> np.ndarray:
    path = Path(path)
    meta = read_sidecar(path)
    if meta.get("dtype") != F32_DTYPE:
        raise FormatError(sidecar_path(path), f"unsupported dtype {meta.get('dtype')!r}")
    try:
        rows, cols = int(meta["rows"]), int(meta["cols"])
    except KeyError as e:
        raise FormatError(sidecar_path(path), f"missing key {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        raise FormatError(sidecar_path(path), f"rows and cols must be integers: {e}") from e
    if rows < 0 or cols < 0:
        raise FormatError(sidecar_path(path), f"negative shape {rows}x{cols}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != rows * cols:
        raise FormatError(
            path, f"sidecar declares {rows}x{cols} values but file holds {raw.size}"
        )
    if not np.all(np.isfinite(raw)):
        raise FormatError(path, "non-finite values")
    return raw.astype(np.float32).reshape(rows, cols)


@dataclass(frozen=True)
class FeatureMatrix:
    """Precomputed text features, one row per entity (or base relation)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("feature matrix contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def bind(self, expected_rows: int, what: str = "entities") -> "FeatureMatrix":
        if self.rows != expected_rows:
            raise ValidationError(f"feature matrix has {self.rows} rows but the graph has {expected_rows} {what}")
        return self


def load_features(path: Path, expected_rows: Optional[int] = None) -> FeatureMatrix:
    features = FeatureMatrix(read_f32_matrix(path))
    if expected_rows is not None:
        try:
            features.bind(expected_rows)
        except ValidationError as e:
            raise FormatError(path, e.message) from e
    return features


def save_features(path: Path, features: FeatureMatrix) -> None:
    write_f32_matrix(path, features.data)


# --- candidate sets ------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateQuery:
    head: int
    rel: int
    candidates: Tuple[int, ...]
    truth_index: Optional[int] = None


class CandidateSet:
    """Tail-prediction queries, each with its own candidate list.

    Stored flat: `candidates[offsets[q]:offsets[q + 1]]` belongs to query q;
    `truth` is -1 where the true tail is unknown.
    """

    def __init__(self, heads, rels, candidates: Sequence[Sequence[int]], truth=None):
        self.heads = np.array(heads, dtype=np.int64).reshape(-1)
        self.rels = np.array(rels, dtype=np.int64).reshape(-1)
        lengths = np.array([len(c) for c in candidates], dtype=np.int64)
        if len(lengths) != len(self.heads) or len(self.rels) != len(self.heads):
            raise ValidationError("heads, rels and candidate lists must have equal length")
        if np.any(lengths == 0):
            raise ValidationError("candidate lists must be non-empty")
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.flat = (
            np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates])
            if len(candidates) else np.zeros(0, dtype=np.int64)
        )
        if truth is None:
            truth = np.full(len(self.heads), -1, dtype=np.int64)
        self.truth = np.array(truth, dtype=np.int64).reshape(-1)
        if len(self.truth) != len(self.heads):
            raise ValidationError("truth must have one entry per query")
        bad = (self.truth >= lengths) | (self.truth < -1)
        if np.any(bad):
            q = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"query {q}: truth index {self.truth[q]} outside its {lengths[q]} candidates")
        for arr in (self.heads, self.rels, self.flat, self.offsets, self.truth):
            arr.setflags(write=False)

    @classmethod
    def from_queries(cls, queries: Sequence[CandidateQuery]) -> "CandidateSet":
        return cls(
            [q.head for q in queries],
            [q.rel for q in queries],
            [q.candidates for q in queries],
            [-1 if q.truth_index is None else q.truth_index for q in queries],
        )

    def __len__(self) -> int:
        return len(self.heads)

    def __iter__(self) -> Iterator[CandidateQuery]:
        for q in range(len(self)):
            yield self.query(q)

    def query(self, q: int) -> CandidateQuery:
        truth = int(self.truth[q])
        return CandidateQuery(
            int(self.heads[q]),
            int(self.rels[q]),
            tuple(self.row(q).tolist()),
            None if truth < 0 else truth,
        )

    def row(self, q: int) -> np.ndarray:
        return self.flat[self.offsets[q]:self.offsets[q + 1]]

    @property
    def row_lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def owner(self) -> np.ndarray:
        """Query index of every flat candidate entry."""
        return np.repeat(np.arange(len(self), dtype=np.int64), self.row_lengths)

    @property
    def has_truth(self) -> bool:
        return bool(np.all(self.truth >= 0))

    def validate_ids(self, num_entities: int, num_relations: int) -> None:
        if len(self) == 0:
            return
        if self.flat.max() >= num_entities or self.heads.max() >= num_entities:
            raise ValidationError(f"candidate entity id out of range for {num_entities} entities")
        if self.rels.max() >= num_relations:
            raise ValidationError(f"query relation id out of range for {num_relations} relations")

    def subset(self, indices) -> "CandidateSet":
        indices = np.asarray(indices, dtype=np.int64)
        return CandidateSet(
            self.heads[indices],
            self.rels[indices],
            [self.row(int(q)) for q in indices],
            self.truth[indices],
        )

    @staticmethod
    def concat(sets: Sequence["CandidateSet"]) -> "CandidateSet":
        rows = [s.row(q) for s in sets for q in range(len(s))]
        return CandidateSet(
            np.concatenate([s.heads for s in sets]) if sets else [],
            np.concatenate([s.rels for s in sets]) if sets else [],
            rows,
            np.concatenate([s.truth for s in sets]) if sets else [],
        )


def load_candidates(path: Path) -> CandidateSet:
    """Read `head<TAB>rel<TAB>c1,c2,...<TAB>truth_index` lines (`-` for unknown truth)."""
    path = Path(path)
    heads, rels, cands, truth = [], [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(path, f"expected 4 tab-separated fields, got {len(parts)}", line=lineno)
            heads.append(_parse_id(parts[0], path, lineno))
            rels.append(_parse_id(parts[1], path, lineno))
            row = [_parse_id(c, path, lineno) for c in parts[2].split(",") if c != ""]
            if not row:
                raise FormatError(path, "empty candidate list", line=lineno)
            cands.append(row)
            if parts[3] == "-":
                truth.append(-1)
            else:
                t = _parse_id(parts[3], path, lineno)
                if t >= len(row):
                    raise FormatError(path, f"truth index {t} outside {len(row)} candidates", line=lineno)
                truth.append(t)
    return CandidateSet(heads, rels, cands, truth)


def save_candidates(path: Path, candidates: CandidateSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q in candidates:
            truth = "-" if q.truth_index is None else str(q.truth_index)
            f.write(f"{q.head}\t{q.rel}\t{','.join(map(str, q.candidates))}\t{truth}\n")
