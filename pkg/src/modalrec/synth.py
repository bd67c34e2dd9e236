"""Deterministic synthetic datasets with planted cluster and next-item structure.

Items are split into contiguous feature clusters (well separated Gaussian
centers, small within-cluster noise) and chained by a global successor rule:
every user sequence is a consecutive run, so the next item is always the
successor of the most recent one. A configurable fraction of items is
image-less.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .fileio import write_catalog_file, write_feature_file, write_interactions_file
from .tokens import derive_seed


@dataclass
class SynthConfig:
    n_items: int = 100
    n_users: int = 50
    dim: int = 16
    n_clusters: int = 4
    image_coverage: float = 1.0      # fraction of items with a visual feature row
    seq_len_min: int = 5
    seq_len_max: int = 10
    center_scale: float = 10.0       # cluster center magnitude (separation)
    noise_scale: float = 0.1         # within-cluster feature noise
    seed: int = 7

    def __post_init__(self):
        if self.n_clusters > self.n_items:
            raise ValueError("more clusters than items")
        if not 0.0 <= self.image_coverage <= 1.0:
            raise ValueError("image coverage must be in [0, 1]")
        if self.seq_len_min < 3:
            raise ValueError("sequences shorter than 3 cannot be split")
        if self.seq_len_min > self.seq_len_max:
            raise ValueError("seq_len_min > seq_len_max")


@dataclass
class SynthData:
    items: list[int]
    has_image: list[bool]
    clusters: list[int]                       # planted cluster label per item
    text_rows: list[tuple[int, np.ndarray]]
    visual_rows: list[tuple[int, np.ndarray]]
    sequences: list[tuple[int, list[int]]]

    def successor(self, item_id: int) -> int:
        n = len(self.items)
        return (item_id + 1) % n


def planted_cluster(item: int, n_items: int, n_clusters: int) -> int:
    return item * n_clusters // n_items


def generate(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(derive_seed(cfg.seed, "synth"))
    items = list(range(cfg.n_items))
    clusters = [planted_cluster(i, cfg.n_items, cfg.n_clusters) for i in items]
    centers = rng.standard_normal((cfg.n_clusters, cfg.dim)) * cfg.center_scale

    text_rows, visual_rows, has_image = [], [], []
    n_with_image = int(round(cfg.image_coverage * cfg.n_items))
    for i in items:
        c = clusters[i]
        text_rows.append((i, (centers[c] + rng.standard_normal(cfg.dim) * cfg.noise_scale)
                          .astype(np.float32)))
        img = i < n_with_image
        has_image.append(img)
        if img:
            visual_rows.append((i, (centers[c] + rng.standard_normal(cfg.dim) * cfg.noise_scale)
                                .astype(np.float32)))

    sequences = []
    for user in range(cfg.n_users):
        length = int(rng.integers(cfg.seq_len_min, cfg.seq_len_max + 1))
        start = int(rng.integers(0, cfg.n_items))
        seq = [(start + t) % cfg.n_items for t in range(length)]
        sequences.append((user, seq))
    return SynthData(items=items, has_image=has_image, clusters=clusters,
                     text_rows=text_rows, visual_rows=visual_rows, sequences=sequences)


def write_dataset(data: SynthData, cfg: SynthConfig, out_dir: str) -> dict[str, str]:
    """Write catalog, both feature files, interactions, and planted labels."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "catalog": os.path.join(out_dir, "catalog.tsv"),
        "text": os.path.join(out_dir, "features_text.mmf"),
        "visual": os.path.join(out_dir, "features_visual.mmf"),
        "interactions": os.path.join(out_dir, "interactions.tsv"),
        "clusters": os.path.join(out_dir, "clusters.tsv"),
    }
    write_catalog_file(paths["catalog"], zip(data.items, data.has_image))
    write_feature_file(paths["text"], cfg.dim, data.text_rows)
    write_feature_file(paths["visual"], cfg.dim, data.visual_rows)
    write_interactions_file(paths["interactions"], data.sequences)
    with open(paths["clusters"] + ".tmp", "w", encoding="utf-8") as fh:
        for item, label in zip(data.items, data.clusters):
            fh.write(f"{item}\t{label}\n")
    os.replace(paths["clusters"] + ".tmp", paths["clusters"])
    return paths
