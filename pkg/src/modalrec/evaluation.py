"""Full-catalog ranking evaluation: Recall@K, NDCG@K, popularity buckets."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionDataset, eval_instances
from .engine import Recommender
from .fusion import CandidateBank

DEFAULT_KS = (10, 50)


@dataclass
class UserResult:
    user_id: int
    target: int
    rank: int                       # 1-based among all catalog items
    metrics: dict[str, float]


@dataclass
class RankResult:
    per_user: list[UserResult]
    aggregates: dict[str, float]
    buckets: list[tuple[float, float, int, float]] = field(default_factory=list)


def target_rank(scores: np.ndarray, item_ids: np.ndarray, target_id: int) -> int:
    """1-based rank of the target; score ties break toward the smaller item id."""
    pos = np.nonzero(item_ids == target_id)[0]
    if pos.size == 0:
        raise KeyError(f"target item {target_id} not in catalog")
    pos = int(pos[0])
    st = scores[pos]
    better = int((scores > st).sum())
    tied_before = int(((scores == st) & (item_ids < target_id)).sum())
    return 1 + better + tied_before


def rank_metrics(scores: np.ndarray, item_ids: np.ndarray, target_id: int,
                 ks=DEFAULT_KS) -> tuple[int, dict[str, float]]:
    """Recall@K and NDCG@K for a single relevant item; NDCG is 1/log2(1+rank)."""
    rank = target_rank(scores, item_ids, target_id)
    metrics: dict[str, float] = {}
    for k in ks:
        hit = rank <= k
        metrics[f"R@{k}"] = 1.0 if hit else 0.0
        metrics[f"N@{k}"] = 1.0 / math.log2(1.0 + rank) if hit else 0.0
    return rank, metrics


def evaluate(rec: Recommender, split: InteractionDataset, ks=DEFAULT_KS,
             transductive: bool = False, bank: CandidateBank | None = None,
             workers: int = 1) -> RankResult:
    """Mean per-user metrics over a valid/test split; deterministic given parameters."""
    instances = eval_instances(split)
    if not instances:
        raise ValueError(f"empty split {split.split!r}")
    if bank is None:
        bank = rec.candidate_bank()

    def score_one(inst) -> UserResult:
        user_id, prefix, target = inst
        u = rec.represent(prefix, use_ids=transductive).u.data.astype(np.float64)
        scores, _, _ = rec.score_all_items(u, bank, transductive=transductive)
        rank, metrics = rank_metrics(scores, bank.ids, target, ks=ks)
        return UserResult(user_id=user_id, target=target, rank=rank, metrics=metrics)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_user = list(pool.map(score_one, instances))
    else:
        per_user = [score_one(inst) for inst in instances]

    agg = {key: float(np.mean([r.metrics[key] for r in per_user]))
           for key in per_user[0].metrics}
    return RankResult(per_user=per_user, aggregates=agg)


def popularity_report(result: RankResult, counts: dict[int, int],
                      edges: list[float]) -> list[tuple[float, float, int, float]]:
    """Group test targets by training popularity into [lo, hi) buckets.

    ``edges`` are ascending bucket boundaries; the last bucket is open-ended.
    Returns (lo, hi, sample count, mean R@10) per bucket.
    """
    if sorted(edges) != list(edges) or len(set(edges)) != len(edges):
        raise ValueError("bucket edges must be strictly ascending")
    bounds = list(edges) + [math.inf]
    buckets: list[tuple[float, float, int, float]] = []
    assigned = 0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        members = [r for r in result.per_user if lo <= counts.get(r.target, 0) < hi]
        assigned += len(members)
        r10 = float(np.mean([m.metrics["R@10"] for m in members])) if members else 0.0
        buckets.append((lo, hi, len(members), r10))
    below = [r for r in result.per_user if counts.get(r.target, 0) < bounds[0]]
    if below:
        raise ValueError(f"{len(below)} targets fall below the first bucket edge {bounds[0]}")
    assert assigned == len(result.per_user)
    return buckets


def write_results_csv(path: str, aggregates: dict[str, float],
                      buckets: list[tuple[float, float, int, float]] | None = None) -> None:
    """``metric,K,value`` rows plus optional ``bucket_lo,bucket_hi,samples,R@10`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,K,value\n")
        for key in sorted(aggregates):
            metric, k = key.split("@")
            name = "Recall" if metric == "R" else "NDCG"
            fh.write(f"{name},{k},{aggregates[key]:.6f}\n")
        if buckets:
            fh.write("bucket_lo,bucket_hi,samples,R@10\n")
            for lo, hi, n, r10 in buckets:
                hi_s = "inf" if math.isinf(hi) else f"{hi:g}"
                fh.write(f"{lo:g},{hi_s},{n},{r10:.6f}\n")
