"""Candidate scoring, average bagging, MRR and knowledge distillation."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import DistillConfig
from .constants import F32_DTYPE
from .errors import DivergenceError, FormatError, ValidationError
from .formats import CandidateSet, read_sidecar, sidecar_path
from .model import CandidateBatch, Features, ModelParams, backward, forward
from .optim import OptimizerState, apply_update
from .utils import write_json

logger = logging.getLogger(__name__)

TIE_BREAKS = ("optimistic", "average")
PREDICT_CHUNK = 1024


class ScoreMatrix:
    """Ragged query x candidate scores, aligned row by row with a CandidateSet."""

    def __init__(self, data, row_lengths):
        self.data = np.array(data, dtype=np.float32).reshape(-1)
        lengths = np.asarray(row_lengths, dtype=np.int64).reshape(-1)
        if np.any(lengths < 0) or int(lengths.sum()) != self.data.size:
            raise ValidationError(
                f"row lengths sum to {int(lengths.sum())} but {self.data.size} scores were given"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("score matrix contains non-finite values")
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.data.setflags(write=False)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "ScoreMatrix":
        flat = np.concatenate([np.asarray(r, dtype=np.float32) for r in rows]) if rows else np.zeros(0)
        return cls(flat, [len(r) for r in rows])

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __repr__(self) -> str:
        return f"ScoreMatrix(queries={len(self)}, entries={self.data.size})"

    @property
    def row_lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def row(self, q: int) -> np.ndarray:
        return self.data[self.offsets[q]:self.offsets[q + 1]]

    def same_layout(self, other: "ScoreMatrix") -> bool:
        return np.array_equal(self.offsets, other.offsets)

    def check_aligned(self, candidates: CandidateSet) -> None:
        if not np.array_equal(self.offsets, candidates.offsets):
            raise ValidationError(
                f"score matrix ({len(self)} rows) is not aligned with the {len(candidates)} candidate lists"
            )


def save_scores(path: Path, scores: ScoreMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(scores.data, dtype="<f4").tofile(path)
    write_json(
        sidecar_path(path),
        {"rows": len(scores), "row_lengths": scores.row_lengths.tolist(), "dtype": F32_DTYPE},
    )


def load_scores(path: Path) -> ScoreMatrix:
    path = Path(path)
    meta = read_sidecar(path)
    if meta.get("dtype") != F32_DTYPE:
        raise FormatError(sidecar_path(path), f"unsupported dtype {meta.get('dtype')!r}")
    lengths = meta.get("row_lengths")
    if not isinstance(lengths, list) or len(lengths) != meta.get("rows"):
        raise FormatError(sidecar_path(path), "row_lengths must list one length per row")
    raw = np.fromfile(path, dtype="<f4")
    try:
        return ScoreMatrix(raw, lengths)
    except ValidationError as e:
        raise FormatError(path, e.message) from e


def _chunk_batch(candidates: CandidateSet, start: int, stop: int) -> CandidateBatch:
    lo, hi = candidates.offsets[start], candidates.offsets[stop]
    owner = np.repeat(np.arange(stop - start, dtype=np.int64), candidates.row_lengths[start:stop])
    return CandidateBatch(
        candidates.heads[start:stop], candidates.rels[start:stop], candidates.flat[lo:hi], owner
    )


def predict(model: ModelParams, features: Features, candidates: CandidateSet) -> ScoreMatrix:
    """Score every candidate list; row q is `score_candidates` over query q."""
    candidates.validate_ids(model.num_entities, model.num_relations)
    parts: List[np.ndarray] = []
    for start in range(0, len(candidates), PREDICT_CHUNK):
        stop = min(start + PREDICT_CHUNK, len(candidates))
        scores, _ = forward(model, features, _chunk_batch(candidates, start, stop))
        parts.append(scores.astype(np.float32))
    data = np.concatenate(parts) if parts else np.zeros(0, dtype=np.float32)
    return ScoreMatrix(data, candidates.row_lengths)


def ensemble_average(matrices: Sequence[ScoreMatrix]) -> ScoreMatrix:
    """Elementwise mean, summed as a fixed pairwise tree in 64-bit."""
    if not matrices:
        raise ValidationError("ensemble_average needs at least one score matrix")
    first = matrices[0]
    for i, other in enumerate(matrices[1:], start=1):
        if not first.same_layout(other):
            raise ValidationError(f"score matrix {i} differs in shape from score matrix 0")

    level = [m.data.astype(np.float64) for m in matrices]
    while len(level) > 1:
        merged = [level[i] + level[i + 1] for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return ScoreMatrix(level[0] / len(matrices), first.row_lengths)


def query_ranks(scores: ScoreMatrix, candidates: CandidateSet, tie_break: str = "optimistic") -> np.ndarray:
    """1-based rank of each query's true tail among its candidates."""
    if tie_break not in TIE_BREAKS:
        raise ValidationError(f"tie_break must be one of {TIE_BREAKS}, got {tie_break!r}")
    scores.check_aligned(candidates)
    if not candidates.has_truth:
        missing = int(np.flatnonzero(candidates.truth < 0)[0])
        raise ValidationError(
            f"query {missing} has no truth index", "MRR needs labelled candidates; blind test sets can only be scored."
        )
    if len(candidates) == 0:
        return np.zeros(0)

    starts = candidates.offsets[:-1]
    truth_scores = scores.data[starts + candidates.truth]
    owner = candidates.owner
    greater = np.add.reduceat((scores.data > truth_scores[owner]).astype(np.int64), starts)
    ranks = 1.0 + greater
    if tie_break == "average":
        equal = np.add.reduceat((scores.data == truth_scores[owner]).astype(np.int64), starts)
        ranks = ranks + (equal - 1) / 2.0
    return ranks


def mrr(scores: ScoreMatrix, candidates: CandidateSet, tie_break: str = "optimistic") -> float:
    """Mean reciprocal rank; ties go to the truth under the optimistic rule."""
    ranks = query_ranks(scores, candidates, tie_break)
    if len(ranks) == 0:
        raise ValidationError("cannot compute MRR over zero queries")
    return float(np.mean(1.0 / ranks))


def evaluate(model: ModelParams, features: Features, candidates: CandidateSet, tie_break: str = "optimistic") -> float:
    return mrr(predict(model, features, candidates), candidates, tie_break)


# --- distillation --------------------------------------------------------------------

def _segment_log_softmax(logits: np.ndarray, starts: np.ndarray, owner: np.ndarray) -> np.ndarray:
    shifted = logits - np.maximum.reduceat(logits, starts)[owner]
    return shifted - np.log(np.add.reduceat(np.exp(shifted), starts))[owner]


def distill_loss(
    student: np.ndarray,
    teacher: np.ndarray,
    starts: np.ndarray,
    owner: np.ndarray,
    temperature: float,
) -> Tuple[float, np.ndarray]:
    """Mean over queries of KL(softmax(teacher/T) || softmax(student/T)) and its gradient on `student`."""
    if not temperature > 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    n_queries = len(starts)
    if n_queries == 0:
        return 0.0, np.zeros_like(student, dtype=np.float64)
    log_t = _segment_log_softmax(np.asarray(teacher, dtype=np.float64) / temperature, starts, owner)
    log_s = _segment_log_softmax(np.asarray(student, dtype=np.float64) / temperature, starts, owner)
    p_t = np.exp(log_t)
    per_query = np.add.reduceat(p_t * (log_t - log_s), starts)
    grad = (np.exp(log_s) - p_t) / (temperature * n_queries)
    return float(per_query.mean()), grad


def distill(
    student: ModelParams,
    teacher_scores: ScoreMatrix,
    candidates: CandidateSet,
    features: Features,
    config: DistillConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[ModelParams, List[float]]:
    """Fit `student` to the teacher's per-query candidate distribution.

    Updates the student in place over `config.steps` optimizer steps (all
    parameters train) and returns it with the per-step losses. Candidate
    lists need no truth labels.
    """
    teacher_scores.check_aligned(candidates)
    candidates.validate_ids(student.num_entities, student.num_relations)
    if config.lr_shallow is None or config.lr_dense is None:
        raise ValidationError("distillation learning rates are unresolved", "Call DistillConfig.resolved(train_config) first.")
    rng = rng or np.random.default_rng(config.seed)
    state = OptimizerState.for_model(student)
    losses: List[float] = []
    n = len(candidates)
    if n == 0:
        return student, losses

    lengths = candidates.row_lengths
    for step in range(config.steps):
        picks = np.sort(rng.choice(n, size=min(config.batch_size, n), replace=False))
        positions = np.concatenate(
            [np.arange(candidates.offsets[q], candidates.offsets[q + 1]) for q in picks]
        )
        owner = np.repeat(np.arange(len(picks), dtype=np.int64), lengths[picks])
        starts = np.concatenate([[0], np.cumsum(lengths[picks])[:-1]]).astype(np.int64)
        batch = CandidateBatch(candidates.heads[picks], candidates.rels[picks], candidates.flat[positions], owner)

        scores, cache = forward(student, features, batch)
        loss, grad = distill_loss(scores, teacher_scores.data[positions], starts, owner, config.temperature)
        if not np.isfinite(loss):
            raise DivergenceError("distill", f"loss became {loss} at step {step}")
        apply_update(state, student, backward(student, cache, grad), config.lr_shallow, config.lr_dense)
        losses.append(loss)
        if step % 50 == 0 or step == config.steps - 1:
            logger.debug(f"distill step {step}: loss={loss:.6f}", extra={"step": step, "loss": loss})
    return student, losses
