"""Figure rendering for evaluation reports and training logs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .training import EpochLog


def plot_popularity_buckets(buckets: list[tuple[float, float, int, float]],
                            path: str) -> None:
    """Histogram of test samples per popularity bucket with an R@10 line overlay."""
    labels = []
    for lo, hi, _, _ in buckets:
        hi_s = "inf" if math.isinf(hi) else f"{hi:g}"
        labels.append(f"[{lo:g},{hi_s})")
    samples = [n for _, _, n, _ in buckets]
    r10 = [r for _, _, _, r in buckets]

    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(buckets))
    ax.bar(xs, samples, color="#9ecae1", label="test samples")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_xlabel("target popularity in training interactions")
    ax.set_ylabel("test samples")
    ax2 = ax.twinx()
    ax2.plot(xs, r10, color="#d6604d", marker="o", label="R@10")
    ax2.set_ylabel("Recall@10")
    ax2.set_ylim(0.0, 1.0)
    fig.legend(loc="upper right", bbox_to_anchor=(0.98, 0.95))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(logs: list[EpochLog], path: str) -> None:
    """Loss and validation Recall@10 over epochs."""
    epochs = [e.epoch for e in logs]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [e.train_loss for e in logs], color="#4575b4", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    valid = [(e.epoch, e.valid_r10) for e in logs if not math.isnan(e.valid_r10)]
    if valid:
        ax2 = ax.twinx()
        ax2.plot([v[0] for v in valid], [v[1] for v in valid],
                 color="#d73027", marker=".", label="valid R@10")
        ax2.set_ylabel("valid Recall@10")
        ax2.set_ylim(0.0, 1.0)
    fig.legend(loc="upper right", bbox_to_anchor=(0.98, 0.95))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
