"""Interest discovery: k-NN density-peaks clustering over the global token set.

Density for a token is exp(-mean squared distance to its k nearest neighbors);
separation is the minimum distance to any denser token (falling back to the
maximum distance when none is denser). Prototypes are the tokens with the
largest density * separation, and every token is indexed to its nearest
prototype. The index is rebuilt from clean tokens before each training epoch
and stays fixed within the epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class ClusteringConfig:
    knn_k: int = 0              # 0 = auto: max(2, round(sqrt(N))), clamped to N-1
    prototype_ratio: float = 0.02
    prototype_count: int = 0    # overrides the ratio when > 0

    def resolve_k(self, n_tokens: int) -> int:
        k = self.knn_k if self.knn_k > 0 else max(2, int(math.floor(math.sqrt(n_tokens) + 0.5)))
        return min(k, n_tokens - 1)

    def resolve_prototype_count(self, n_items: int, n_tokens: int) -> int:
        if self.prototype_count > 0:
            kc = self.prototype_count
        else:
            # ratio of the item amount, rounded half-up
            kc = int(math.floor(self.prototype_ratio * n_items + 0.5))
        return max(1, min(kc, n_tokens))


@dataclass
class InterestIndex:
    """Prototype token vectors plus a token-key -> prototype lookup."""

    prototypes: np.ndarray                       # (K_c, d), rows are actual tokens
    prototype_keys: list[tuple[int, str]]        # token key of each prototype
    assignment: dict[tuple[int, str], int]       # token key -> prototype index

    @property
    def count(self) -> int:
        return self.prototypes.shape[0]


def dpc_scores(tokens: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Local density and separation for each token.

    Density ties are broken by index: an equal-density token with a smaller
    index counts as denser, so exactly one global peak takes the max-distance
    fallback.
    """
    n = tokens.shape[0]
    if n < 2:
        raise ValueError("density-peaks clustering needs at least 2 tokens")
    if k >= n:
        raise ValueError(f"neighbor count k={k} must be < token count {n}")
    if k < 1:
        raise ValueError("neighbor count k must be >= 1")
    x = tokens.astype(np.float64)

    # two row-wise passes keep memory at O(N) while staying exact
    density = np.empty(n, dtype=np.float64)
    for i in range(n):
        sq = _sq_dists_from(x, i)
        sq[i] = np.inf  # self excluded from the k-NN set
        # neighbors ordered by (distance, index); argsort is stable on ties
        knn = np.argsort(sq, kind="stable")[:k]
        density[i] = np.exp(-sq[knn].mean())

    idx = np.arange(n)
    separation = np.empty(n, dtype=np.float64)
    for i in range(n):
        dist = np.sqrt(_sq_dists_from(x, i))
        denser = (density > density[i]) | ((density == density[i]) & (idx < i))
        separation[i] = dist[denser].min() if denser.any() else dist.max()
    return density, separation


def _sq_dists_from(x: np.ndarray, i: int) -> np.ndarray:
    diff = x - x[i]
    return np.einsum("ij,ij->i", diff, diff)


def select_prototypes(density: np.ndarray, separation: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` tokens with the largest density * separation.

    Ties break toward the smaller index; the result is ordered by rank.
    """
    n = density.shape[0]
    if count > n:
        raise ValueError(f"prototype count {count} exceeds token count {n}")
    score = density * separation
    order = sorted(range(n), key=lambda i: (-score[i], i))
    return np.asarray(order[:count], dtype=np.int64)


def build_interest_index(tokens: np.ndarray, keys: list[tuple[int, str]],
                         prototype_indices: np.ndarray) -> InterestIndex:
    """Assign every token to its nearest prototype (ties to the lowest prototype index)."""
    if len(prototype_indices) == 0:
        raise ValueError("no prototypes selected")
    protos = tokens[prototype_indices].astype(np.float64)
    x = tokens.astype(np.float64)
    nearest = np.empty(x.shape[0], dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, protos.shape[0] * protos.shape[1]))
    for lo in range(0, x.shape[0], chunk):
        hi = min(lo + chunk, x.shape[0])
        d2 = ((x[lo:hi, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
        # argmin returns the first (lowest) prototype index on ties
        nearest[lo:hi] = d2.argmin(axis=1)
    assignment = {key: int(p) for key, p in zip(keys, nearest)}
    proto_keys = [keys[i] for i in prototype_indices]
    return InterestIndex(prototypes=tokens[prototype_indices].copy(),
                         prototype_keys=proto_keys, assignment=assignment)


def refresh(tokens: np.ndarray, keys: list[tuple[int, str]], config: ClusteringConfig,
            n_items: int) -> InterestIndex:
    """Full clustering pipeline over the clean global token set."""
    n = tokens.shape[0]
    k = config.resolve_k(n)
    kc = config.resolve_prototype_count(n_items, n)
    density, separation = dpc_scores(tokens, k)
    proto_idx = select_prototypes(density, separation, kc)
    return build_interest_index(tokens, keys, proto_idx)


def translate(keys: list[tuple[int, str]], index: InterestIndex) -> list[int]:
    """Map token keys to prototype ids, deduplicated in first-occurrence order."""
    seen: set[int] = set()
    out: list[int] = []
    for key in keys:
        if key not in index.assignment:
            raise KeyError(f"token key {key} not in the interest index (stale index?)")
        pid = index.assignment[key]
        if pid not in seen:
            seen.add(pid)
            out.append(pid)
    return out
