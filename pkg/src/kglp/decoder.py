"""ComplEx and DistMult decoders.

Both are written as a query vector q(h, r) dotted with the tail, so one
query can be scored against many candidate tails with a single product.
"""

from __future__ import annotations

from enum import Enum
from typing import Tuple

import numpy as np

from .errors import ValidationError


class Decoder(str, Enum):
    COMPLEX = "complex"
    DISTMULT = "distmult"


def _halves(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    half = x.shape[-1] // 2
    return x[..., :half], x[..., half:]


def query_vectors(decoder: Decoder, heads: np.ndarray, rels: np.ndarray) -> np.ndarray:
    """q such that score(h, r, t) = q . t.

    For ComplEx, vectors are C^{d/2} with the first half real; q = h * r
    in complex arithmetic, and q . t = Re<h, r, conj(t)>.
    """
    if heads.shape != rels.shape:
        raise ValidationError(f"head and relation embeddings differ in shape: {heads.shape} vs {rels.shape}")
    if Decoder(decoder) is Decoder.DISTMULT:
        return heads * rels
    if heads.shape[-1] % 2:
        raise ValidationError(f"ComplEx needs an even dimension, got {heads.shape[-1]}")
    h_re, h_im = _halves(heads)
    r_re, r_im = _halves(rels)
    return np.concatenate([h_re * r_re - h_im * r_im, h_re * r_im + h_im * r_re], axis=-1)


def query_backward(
    decoder: Decoder, heads: np.ndarray, rels: np.ndarray, grad_query: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Pull a gradient on q back to (d heads, d rels)."""
    if Decoder(decoder) is Decoder.DISTMULT:
        return grad_query * rels, grad_query * heads
    h_re, h_im = _halves(heads)
    r_re, r_im = _halves(rels)
    g_re, g_im = _halves(grad_query)
    d_heads = np.concatenate([g_re * r_re + g_im * r_im, g_im * r_re - g_re * r_im], axis=-1)
    d_rels = np.concatenate([g_re * h_re + g_im * h_im, g_im * h_re - g_re * h_im], axis=-1)
    return d_heads, d_rels


def _vectors(*vs) -> Tuple[np.ndarray, ...]:
    arrays = tuple(np.asarray(v, dtype=np.float64).reshape(-1) for v in vs)
    if len({a.shape for a in arrays}) != 1:
        raise ValidationError(f"embedding dimensions differ: {[a.shape[0] for a in arrays]}")
    return arrays


def score_complex(e_h, e_r, e_t) -> float:
    """Re<h, r, conj(t)> over the complex view of d-dimensional real vectors."""
    h, r, t = _vectors(e_h, e_r, e_t)
    return float(np.dot(query_vectors(Decoder.COMPLEX, h, r), t))


def score_distmult(e_h, e_r, e_t) -> float:
    h, r, t = _vectors(e_h, e_r, e_t)
    return float(np.dot(h * r, t))


def conjugate(e_r) -> np.ndarray:
    """Negate the imaginary half."""
    re, im = _halves(np.asarray(e_r))
    return np.concatenate([re, -im], axis=-1)


def score(decoder: Decoder, e_h, e_r, e_t) -> float:
    if Decoder(decoder) is Decoder.DISTMULT:
        return score_distmult(e_h, e_r, e_t)
    return score_complex(e_h, e_r, e_t)
