"""User-adaptive modality fusion and factorized candidate scoring.

A candidate's modality embeddings are blended with weights exp(alpha * <u, x>)
normalized over the present modalities; the same blend factorizes into a
score-space form, so full-catalog scoring only needs the per-modality inner
products. alpha >= 0 interpolates between mean pooling (alpha = 0) and max
pooling (alpha -> inf) and is learned through a softplus reparameterization.
All exponentials are shifted by the max logit before exponentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor

# softplus(ALPHA_INIT_RAW) = 1
ALPHA_INIT_RAW = float(np.log(np.e - 1.0))


def make_alpha_param(dtype=np.float32) -> Parameter:
    return Parameter(np.asarray(ALPHA_INIT_RAW, dtype=dtype), name="fusion.raw_alpha")


def alpha_value(raw: float) -> float:
    """Softplus of the free scalar; the concentration is always >= 0."""
    return float(np.logaddexp(0.0, raw))


def fuse_candidate(u: np.ndarray, x_text: np.ndarray, x_visual: np.ndarray | None,
                   alpha: float) -> np.ndarray:
    """Blend a candidate's modality embeddings with user-conditioned weights.

    Falls back to the text embedding alone when the visual one is absent.
    """
    if x_visual is None:
        return np.asarray(x_text)
    st = float(np.dot(u, x_text))
    sv = float(np.dot(u, x_visual))
    m = max(alpha * st, alpha * sv)
    wt = np.exp(alpha * st - m)
    wv = np.exp(alpha * sv - m)
    return (wt * x_text + wv * x_visual) / (wt + wv)


def match_score(s_text, s_visual, alpha: float):
    """Score-space form of the fusion; accepts scalars or same-shape arrays.

    ``s_visual`` may be None (single-modality candidates score by text alone)
    or an array paired with a boolean mask via :func:`match_score_masked`.
    """
    if s_visual is None:
        return s_text
    st = np.asarray(s_text, dtype=np.float64)
    sv = np.asarray(s_visual, dtype=np.float64)
    m = np.maximum(alpha * st, alpha * sv)
    et = np.exp(alpha * st - m)
    ev = np.exp(alpha * sv - m)
    out = (st * et + sv * ev) / (et + ev)
    return float(out) if out.ndim == 0 else out


def match_score_masked(s_text: np.ndarray, s_visual: np.ndarray,
                       has_visual: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized fusion where ``has_visual`` flags the items with both modalities."""
    fused = match_score(s_text, np.where(has_visual, s_visual, s_text), alpha)
    return np.where(has_visual, fused, s_text)


def fused_score_matrix(s_text: Tensor, s_visual: Tensor, has_visual: np.ndarray,
                       raw_alpha: Parameter) -> Tensor:
    """Graph version of the score fusion over a (B, C) score pair.

    ``has_visual`` masks candidate columns; text-only columns reduce exactly to
    the text score. The max shift is detached (its total derivative is zero).
    """
    alpha = ad.softplus(raw_alpha)
    at = ad.mul(s_text, alpha)
    av = ad.mul(s_visual, alpha)
    mask = np.broadcast_to(has_visual.astype(s_text.dtype), s_text.shape)
    # text-only columns shift by the text logit alone so et stays exactly 1
    shift = ad.constant(np.where(mask > 0, np.maximum(at.data, av.data), at.data).copy())
    et = ad.exp(at - shift)
    ev = ad.mul(ad.exp(av - shift), ad.constant(mask.copy()))
    num = ad.mul(s_text, et) + ad.mul(s_visual, ev)
    return ad.div(num, et + ev)


@dataclass
class CandidateBank:
    """Clean adapted embeddings for the whole catalog, for full ranking."""

    ids: np.ndarray            # external item id per row
    text: np.ndarray           # (n, d)
    visual: np.ndarray         # (n, d); zero rows where absent
    has_visual: np.ndarray     # (n,) bool

    def __len__(self) -> int:
        return self.text.shape[0]


def score_bank(u: np.ndarray, bank: CandidateBank, alpha: float,
               id_table: np.ndarray | None = None
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores over every catalog item for one sequence representation.

    Returns (scores, s_text, s_visual). With an ID table the transductive head
    adds <u, z_k> outside the modality fusion.
    """
    s_text = bank.text @ u
    s_visual = bank.visual @ u
    scores = match_score_masked(s_text, s_visual, bank.has_visual, alpha)
    if id_table is not None:
        if id_table.shape[0] != len(bank):
            raise ValueError("ID table does not cover the catalog")
        scores = scores + id_table @ u
    return scores, s_text, s_visual


def probabilities(scores: np.ndarray) -> np.ndarray:
    """Softmax over the item axis."""
    e = np.exp(scores - scores.max())
    return e / e.sum()
