"""Row-wise Adagrad for shallow tables and Adam for dense encoder weights."""

from __future__ import annotations

import threading
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import ContextManager, Dict

import numpy as np

from .encoder import active_names
from .errors import DivergenceError
from .model import SIDES, Gradients, ModelParams

ADAGRAD_EPS = 1e-10
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    """Per-coordinate squared-gradient sums per shallow table, Adam moments per dense tensor."""

    accum: Dict[str, np.ndarray]
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    dense_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def for_model(cls, model: ModelParams) -> "OptimizerState":
        accum = {side: np.zeros_like(model.shallow(side).data) for side in SIDES}
        m, v = {}, {}
        for side in SIDES:
            enc = model.encoder(side)
            for name in active_names(model.variant):
                m[f"{side}.{name}"] = np.zeros_like(getattr(enc, name))
                v[f"{side}.{name}"] = np.zeros_like(getattr(enc, name))
        return cls(accum, m, v)


def check_finite(grads: Gradients) -> None:
    for name, arr in grads.arrays():
        if not np.all(np.isfinite(arr)):
            bad = int(np.count_nonzero(~np.isfinite(arr)))
            raise DivergenceError("apply_update", f"{bad} non-finite gradient value(s) in {name}")


def adagrad_rows(
    table: np.ndarray, accum: np.ndarray, rows: np.ndarray, grad: np.ndarray, lr: float
) -> None:
    """Sparse Adagrad on `rows` (unique ids). Untouched rows are not written."""
    # Local copy of the accumulator keeps local >= grad**2 under racing writers.
    local = accum[rows] + grad * grad
    accum[rows] = local
    table[rows] -= lr * grad / (np.sqrt(local) + ADAGRAD_EPS)


def adam_step(param: np.ndarray, m: np.ndarray, v: np.ndarray, grad: np.ndarray, lr: float, step: int) -> None:
    m *= ADAM_BETA1
    m += (1 - ADAM_BETA1) * grad
    v *= ADAM_BETA2
    v += (1 - ADAM_BETA2) * grad * grad
    m_hat = m / (1 - ADAM_BETA1 ** step)
    v_hat = v / (1 - ADAM_BETA2 ** step)
    param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def apply_update(
    state: OptimizerState,
    model: ModelParams,
    grads: Gradients,
    lr_shallow: float,
    lr_dense: float,
    hogwild: bool = False,
) -> ModelParams:
    """Apply one optimizer step in place and return `model`.

    With `hogwild`, shallow rows are written without synchronization
    (last writer wins per coordinate) while dense tensors and the Adam step
    counter stay behind `state.dense_lock`.
    """
    check_finite(grads)

    for side in SIDES:
        g = grads.side(side)
        if len(g.rows):
            adagrad_rows(model.shallow(side).data, state.accum[side], g.rows, g.shallow, lr_shallow)

    lock: ContextManager = state.dense_lock if hogwild else nullcontext()
    with lock:
        state.step += 1
        for side in SIDES:
            enc = model.encoder(side)
            dense = grads.side(side).dense
            for name in active_names(model.variant):
                grad = dense.get(name)
                if grad is None:
                    continue
                key = f"{side}.{name}"
                adam_step(getattr(enc, name), state.m[key], state.v[key], grad, lr_dense, state.step)
    return model
