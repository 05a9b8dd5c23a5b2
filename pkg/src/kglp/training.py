"""Negative-sampling training in the tail-only, inverse-relation regime."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from .checkpoint import save_checkpoint
from .config import TrainConfig
from .constants import METRICS_FILE
from .decoder import Decoder
from .encoder import EncoderVariant
from .errors import DivergenceError, ValidationError
from .formats import CandidateSet
from .inference import evaluate
from .model import CandidateBatch, Features, Gradients, ModelParams, backward, forward, init_model
from .optim import OptimizerState, apply_update
from .store import TripleStore, add_inverse_relations
from .utils import write_jsonl

logger = logging.getLogger(__name__)


def sample_negatives(rng: np.random.Generator, positives, n: int, num_entities: int) -> np.ndarray:
    """`n` uniform tails per positive, drawn with replacement; false negatives are kept."""
    if num_entities <= 0:
        raise ValidationError("cannot sample negatives from a graph with no entities")
    if n < 1:
        raise ValidationError(f"negative sample size must be >= 1, got {n}")
    return rng.integers(0, num_entities, size=(len(positives), n), dtype=np.int64)


def loss_and_grads(
    model: ModelParams, features: Features, batch: np.ndarray, negatives: np.ndarray
) -> Tuple[float, Gradients]:
    """Sampled-softmax cross-entropy with the true tail as class 0 of [tail, negatives...]."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(batch), -1)
    candidates = np.concatenate([batch[:, 2:3], negatives], axis=1)
    scores, cache = forward(model, features, CandidateBatch.rectangular(batch[:, 0], batch[:, 1], candidates))

    logits = scores.reshape(candidates.shape).astype(np.float64)
    n_pos = len(batch)
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[:, 0]))
    grad = softmax(logits, axis=1)
    grad[:, 0] -= 1.0
    grad /= n_pos
    return loss, backward(model, cache, grad.reshape(-1))


@dataclass
class TrainResult:
    model: ModelParams
    metrics: List[Dict[str, Any]] = field(default_factory=list)
    best_step: int = 0
    best_valid_mrr: Optional[float] = None


def _train_batch(
    model: ModelParams,
    features: Features,
    state: OptimizerState,
    batch: np.ndarray,
    rng: np.random.Generator,
    neg_samples: int,
    lr_shallow: float,
    lr_dense: float,
    hogwild: bool = False,
) -> float:
    negatives = sample_negatives(rng, batch, neg_samples, model.num_entities)
    loss, grads = loss_and_grads(model, features, batch, negatives)
    if not math.isfinite(loss):
        raise DivergenceError("train", f"loss became {loss}")
    apply_update(state, model, grads, lr_shallow, lr_dense, hogwild=hogwild)
    return loss


def _batches(order: np.ndarray, triples: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [triples[order[i:i + batch_size]] for i in range(0, len(order), batch_size)]


def train(
    store: TripleStore,
    features: Features,
    config: TrainConfig,
    valid: Optional[CandidateSet] = None,
    out_dir: Optional[Path] = None,
    tie_break: str = "optimistic",
) -> TrainResult:
    """Train a fresh model on `store` (base relation ids) and keep the best-validation copy.

    Inverse relations are added here when the config asks for them.
    Deterministic mode processes shuffled batches in order and evaluates
    every `eval_every` steps; with `deterministic=False` and several workers,
    batches of an epoch are trained concurrently (hogwild) and evaluation
    happens at epoch boundaries.
    """
    rng = np.random.default_rng(config.seed)
    num_base = store.num_relations
    train_store = add_inverse_relations(store) if config.inverse_relations else store
    model = init_model(
        rng,
        store.num_entities,
        num_base,
        features,
        config.dim,
        config.mlp_hidden,
        EncoderVariant(config.variant),
        Decoder(config.decoder),
        inverse_relations=config.inverse_relations,
    )
    if valid is not None:
        valid.validate_ids(model.num_entities, model.num_relations)
    state = OptimizerState.for_model(model)
    result = TrainResult(model=model)
    triples = train_store.triples
    steps_per_epoch = max(1, math.ceil(len(triples) / config.batch_size))
    eval_every = config.eval_every or steps_per_epoch
    hogwild = not config.deterministic and config.workers > 1

    pending: List[float] = []
    best: Optional[ModelParams] = None

    def checkpoint(step: int) -> None:
        nonlocal best
        loss = float(np.mean(pending)) if pending else None
        pending.clear()
        valid_mrr = evaluate(model, features, valid, tie_break) if valid is not None and len(valid) else None
        result.metrics.append({"step": step, "loss": loss, "valid_mrr": valid_mrr})
        logger.info(
            f"step {step}: loss={'-' if loss is None else f'{loss:.4f}'} "
            f"valid_mrr={'-' if valid_mrr is None else f'{valid_mrr:.4f}'}",
            extra={"step": step, "loss": loss, "valid_mrr": valid_mrr},
        )
        if best is None or valid_mrr is None or valid_mrr > result.best_valid_mrr:
            best = model.copy()
            result.best_step = step
            result.best_valid_mrr = valid_mrr

    logger.info(
        f"Training {config.variant}/{config.decoder} on {len(triples)} triples "
        f"({train_store.num_relations} relations, {config.epochs} epochs, "
        f"{'hogwild x' + str(config.workers) if hogwild else 'single-writer'})"
    )
    checkpoint(0)
    step = 0
    for epoch in range(config.epochs):
        batches = _batches(rng.permutation(len(triples)), triples, config.batch_size)
        if hogwild:
            seeds = rng.integers(0, 2**63 - 1, size=len(batches))
            with ThreadPoolExecutor(max_workers=config.workers) as ex:
                futures = [
                    ex.submit(
                        _train_batch, model, features, state, b, np.random.default_rng(int(s)),
                        config.neg_samples, config.lr_shallow, config.lr_dense, True,
                    )
                    for b, s in zip(batches, seeds)
                ]
                pending.extend(f.result() for f in futures)
            step += len(batches)
            checkpoint(step)
            continue

        for b in batches:
            pending.append(
                _train_batch(model, features, state, b, rng, config.neg_samples, config.lr_shallow, config.lr_dense)
            )
            step += 1
            if step % eval_every == 0:
                checkpoint(step)
    if pending:
        checkpoint(step)

    result.model = best if best is not None else model
    if out_dir is not None:
        save_checkpoint(
            out_dir,
            result.model,
            train_config=config.to_dict(),
            extra={"best_step": result.best_step, "best_valid_mrr": result.best_valid_mrr},
        )
        write_jsonl(Path(out_dir) / METRICS_FILE, result.metrics)
    return result


def finetune(
    model: ModelParams,
    features: Features,
    triples: np.ndarray,
    config: TrainConfig,
    epochs: int = 1,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[ModelParams, List[float]]:
    """Continue training `model` in place on `triples` (model relation ids) with a fresh optimizer."""
    rng = rng or np.random.default_rng(config.seed)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    losses: List[float] = []
    if len(triples) == 0 or epochs == 0:
        return model, losses
    state = OptimizerState.for_model(model)
    for _ in range(epochs):
        for b in _batches(rng.permutation(len(triples)), triples, config.batch_size):
            losses.append(
                _train_batch(model, features, state, b, rng, config.neg_samples, config.lr_shallow, config.lr_dense)
            )
    logger.debug(f"finetuned on {len(triples)} triples for {epochs} epoch(s); last loss {losses[-1]:.4f}")
    return model, losses
