"""Contrastive training objectives and the interest-diversity penalty."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def info_nce_diagonal(scores: Tensor) -> Tensor:
    """Mean cross-entropy of each row's softmax against its diagonal entry.

    ``scores`` is a (B, B) matrix already divided by the temperature; row i's
    positive sits at column i and the positive term stays in the denominator.
    """
    if scores.shape[0] == 0:
        raise ValueError("empty batch")
    lse = ad.logsumexp_rows(scores)
    pos = ad.diag_part(scores)
    return ad.mean_all(lse - pos)


def seq_item_loss(u: Tensor, v: Tensor, tau: float) -> Tensor:
    """Sequence-item contrast with in-batch negatives.

    Row i of ``v`` is the fused embedding of user i's ground-truth next item;
    the score matrix is <u_i, v_j> / tau.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    scores = ad.mul(ad.matmul(u, ad.transpose(v)), 1.0 / tau)
    return info_nce_diagonal(scores)


def seq_seq_loss(u: Tensor, u_prime: Tensor, tau: float,
                 exclude_self: bool = False) -> Tensor:
    """Agreement between two augmented views of each user's sequence.

    The denominator sums exp(<u_i, u_j>/tau) + exp(<u_i, u_j'>/tau) over the
    whole batch, including the j = i self term unless ``exclude_self``.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if u.shape[0] == 0:
        raise ValueError("empty batch")
    same = ad.mul(ad.matmul(u, ad.transpose(u)), 1.0 / tau)
    cross = ad.mul(ad.matmul(u, ad.transpose(u_prime)), 1.0 / tau)
    if exclude_self:
        b = same.shape[0]
        mask = np.zeros((b, b), dtype=same.dtype)
        np.fill_diagonal(mask, ad.NEG_INF)
        same = ad.add(same, ad.constant(mask))
    lse = ad.logsumexp_rows(ad.concat([same, cross], axis=1))
    pos = ad.diag_part(cross)
    return ad.mean_all(lse - pos)


def interest_diversity_penalty(encoded: Tensor) -> Tensor:
    """Mean pairwise inner product of the encoded interest tokens.

    The double sum over the M x M Gram matrix (diagonal included) divided by
    M^2; minimizing it pushes the encoded interests toward orthogonality.
    """
    m = encoded.shape[0]
    if m < 1:
        raise ValueError("need at least one encoded interest token")
    gram = ad.matmul(encoded, ad.transpose(encoded))
    return ad.mul(ad.sum_all(gram), 1.0 / float(m * m))
