"""Pre-training and fine-tuning loops with epoch-wise interest refresh.

The pre-training objective sums the sequence-item contrast, the weighted
sequence-sequence contrast between two augmented views, and the weighted
interest-diversity penalty, averaged over the batch. Fine-tuning drops the
augmentation and the view contrast, tunes only the adapters (plus the ID table
in transductive mode), and early-stops on validation Recall@10.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, train_pairs
from .engine import Recommender, view_seed
from .evaluation import evaluate
from .losses import info_nce_diagonal, interest_diversity_penalty, seq_seq_loss
from .optim import AdamState, adam_step, clip_global_norm, zero_grads
from .tokens import derive_seed

logger = logging.getLogger(__name__)

LR_GRID = (3e-4, 1e-3, 3e-3, 1e-2)


@dataclass
class TrainingConfig:
    stage: str = "pretrain"            # pretrain | finetune
    mode: str = "inductive"            # inductive | transductive
    batch_size: int = 16
    tau: float = 0.07
    ss_weight: float = 1e-3            # sequence-sequence contrast weight
    ortho_weight: float = 1e-4         # interest-diversity weight
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 10
    augment_rate: float = 0.1
    seed: int = 42
    clip_norm: float = 5.0
    eval_every: int = 1
    si_views: str = "first"            # first | mean: which view feeds the sequence-item loss
    ss_exclude_self: bool = False
    disable_ss_loss: bool = False
    disable_ortho: bool = False

    def __post_init__(self):
        if self.stage not in ("pretrain", "finetune"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.mode not in ("inductive", "transductive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.ss_weight < 0 or self.ortho_weight < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    valid_r10: float
    valid_n10: float
    lr: float
    seconds: float

    def line(self) -> str:
        return (f"{self.epoch},{self.train_loss:.6f},{self.valid_r10:.6f},"
                f"{self.valid_n10:.6f},{self.lr:g},{self.seconds:.3f}")


@dataclass
class TrainResult:
    logs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_r10: float = -1.0
    stopped_early: bool = False


def batch_loss(rec: Recommender, batch: list[tuple[int, list[int], int]],
               cfg: TrainingConfig, epoch: int) -> Tensor:
    """Total objective for one batch of (user, prefix, target) examples."""
    pretrain = cfg.stage == "pretrain"
    use_views = pretrain and not cfg.disable_ss_loss and cfg.ss_weight > 0.0
    transductive = cfg.mode == "transductive" and cfg.stage == "finetune"
    aug = cfg.augment_rate if pretrain else 0.0

    u1_rows, u2_rows, ortho_terms = [], [], []
    for user_id, prefix, _ in batch:
        rep1 = rec.represent(prefix, augment_rate=aug,
                             seed=view_seed(cfg.seed, epoch, user_id, 1),
                             use_ids=transductive)
        u1_rows.append(rep1.u)
        if use_views:
            rep2 = rec.represent(prefix, augment_rate=aug,
                                 seed=view_seed(cfg.seed, epoch, user_id, 2),
                                 use_ids=transductive)
            u2_rows.append(rep2.u)
        if not cfg.disable_ortho and cfg.ortho_weight > 0.0 and rep1.encoded is not None:
            ortho_terms.append(interest_diversity_penalty(rep1.encoded))

    u1 = ad.stack_rows(u1_rows)
    if use_views and cfg.si_views == "mean":
        u_si = ad.mul(u1 + ad.stack_rows(u2_rows), 0.5)
    else:
        u_si = u1

    targets = [target for _, _, target in batch]
    scores = ad.mul(rec.batch_score_matrix(u_si, targets, transductive=transductive),
                    1.0 / cfg.tau)
    loss = info_nce_diagonal(scores)
    if use_views:
        loss = loss + ad.mul(seq_seq_loss(u1, ad.stack_rows(u2_rows), cfg.tau,
                                          exclude_self=cfg.ss_exclude_self), cfg.ss_weight)
    if ortho_terms:
        loss = loss + ad.mul(_mean_scalars(ortho_terms), cfg.ortho_weight)
    return loss


def _mean_scalars(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return ad.mul(total, 1.0 / len(terms))


def train(rec: Recommender, cfg: TrainingConfig, log_path: str | None = None,
          max_batches_per_epoch: int = 0,
          stop_check=None) -> TrainResult:
    """Run the configured stage; returns per-epoch logs and the best epoch.

    Fine-tuning restores the parameters of the best validation epoch before
    returning. ``stop_check`` (called with the current TrainResult) may end
    training early, e.g. once an experiment's criterion is met.
    """
    dataset: Dataset = rec.dataset
    rec.set_stage_trainable(cfg.stage, cfg.mode)
    pairs = train_pairs(dataset.train)
    if not pairs:
        raise ValueError("no trainable predict-next pairs; sequences too short")
    state = AdamState()
    result = TrainResult()
    best_snapshot = None
    since_best = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            rec.refresh_index()
            rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch))
            order = rng.permutation(len(pairs))
            losses = []
            n_batches = 0
            for lo in range(0, len(order), cfg.batch_size):
                batch = [pairs[i] for i in order[lo:lo + cfg.batch_size]]
                zero_grads(rec.params)
                loss = batch_loss(rec, batch, cfg, epoch)
                if not np.isfinite(loss.data):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size}: "
                        f"{float(loss.data)} (lr={cfg.lr}, tau={cfg.tau})")
                loss.backward()
                clip_global_norm(rec.params, cfg.clip_norm)
                adam_step(rec.params, state, cfg.lr)
                losses.append(float(loss.data))
                n_batches += 1
                if max_batches_per_epoch and n_batches >= max_batches_per_epoch:
                    break

            valid_r10 = valid_n10 = float("nan")
            if cfg.eval_every and epoch % cfg.eval_every == 0:
                res = evaluate(rec, dataset.valid, ks=(10,),
                               transductive=cfg.mode == "transductive" and cfg.stage == "finetune")
                valid_r10 = res.aggregates["R@10"]
                valid_n10 = res.aggregates["N@10"]
            entry = EpochLog(epoch=epoch, train_loss=float(np.mean(losses)),
                             valid_r10=valid_r10, valid_n10=valid_n10,
                             lr=cfg.lr, seconds=time.perf_counter() - t0)
            result.logs.append(entry)
            if log_fh:
                log_fh.write(entry.line() + "\n")
                log_fh.flush()
            logger.info("epoch %d: loss=%.4f valid_R@10=%.4f (%.2fs)",
                        epoch, entry.train_loss, valid_r10, entry.seconds)

            if np.isfinite(valid_r10) and valid_r10 > result.best_valid_r10:
                result.best_valid_r10 = valid_r10
                result.best_epoch = epoch
                best_snapshot = rec.snapshot()
                since_best = 0
            elif np.isfinite(valid_r10):
                since_best += 1
                if cfg.stage == "finetune" and since_best >= cfg.patience:
                    result.stopped_early = True
                    break
            if stop_check is not None and stop_check(result):
                break
    finally:
        if log_fh:
            log_fh.close()
    if cfg.stage == "finetune" and best_snapshot is not None:
        rec.restore(best_snapshot)
    return result
