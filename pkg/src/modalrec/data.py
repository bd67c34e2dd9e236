"""Item catalog, per-modality feature tables, and interaction sequences.

Loading is single-threaded; once loaded, every structure here is immutable by
convention and safe to read from any number of threads. Item and user ids are
remapped to dense indices at load so embedding tables can be indexed directly;
the mapping is persisted next to checkpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fileio import read_catalog_file, read_feature_file, read_interactions_file

logger = logging.getLogger(__name__)

TEXT = "text"
VISUAL = "visual"
MODALITIES = (TEXT, VISUAL)

# leave-one-out protocol: last item is the test target, second-to-last the
# validation target, so a usable sequence needs at least 3 interactions
MIN_SEQUENCE_LENGTH = 3


@dataclass
class ItemCatalog:
    """Ordered item set with image coverage flags and dense index mapping."""

    ids: list[int]                      # external ids in catalog order
    has_image: np.ndarray               # bool per dense index
    popularity: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("catalog item ids are not unique")
        self.dense = {item_id: i for i, item_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id: int) -> bool:
        return item_id in self.dense


@dataclass
class FeatureTable:
    """Raw feature vectors for one modality, keyed by external item id."""

    modality: str
    dim: int
    rows: dict[int, np.ndarray]

    def matrix(self, ids: list[int]) -> np.ndarray:
        return np.stack([self.rows[i] for i in ids], axis=0)


@dataclass
class InteractionDataset:
    """Per-user item sequences, ordered by time as given."""

    sequences: list[tuple[int, list[int]]]
    split: str = "all"

    def __len__(self) -> int:
        return len(self.sequences)


def load_catalog(path: str) -> ItemCatalog:
    entries = read_catalog_file(path)
    ids = [item_id for item_id, _ in entries]
    has_image = np.array([img for _, img in entries], dtype=bool)
    return ItemCatalog(ids=ids, has_image=has_image)


def load_features(path: str, modality: str, catalog: ItemCatalog) -> FeatureTable:
    """Load and validate one modality's feature file against the catalog.

    Text must cover every catalog item; visual rows may be a subset (items
    without images are first-class). Rows for unknown items are rejected.
    """
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}")
    dim, rows = read_feature_file(path)
    for item_id in rows:
        if item_id not in catalog:
            raise ValueError(f"{path}: feature row for item {item_id} not in catalog")
    if modality == TEXT:
        missing = [i for i in catalog.ids if i not in rows]
        if missing:
            raise ValueError(f"{path}: text features missing for {len(missing)} catalog items "
                             f"(first: {missing[0]})")
    else:
        for i, item_id in enumerate(catalog.ids):
            if catalog.has_image[i] and item_id not in rows:
                raise ValueError(f"{path}: visual features missing for item {item_id} "
                                 "flagged as having an image")
    return FeatureTable(modality=modality, dim=dim, rows=rows)


def load_interactions(path: str, catalog: ItemCatalog,
                      min_length: int = MIN_SEQUENCE_LENGTH) -> InteractionDataset:
    """Load user sequences, dropping those shorter than min_length (warned, counted)."""
    raw = read_interactions_file(path)
    kept: list[tuple[int, list[int]]] = []
    dropped = 0
    seen_users: set[int] = set()
    for user_id, items in raw:
        if user_id in seen_users:
            raise ValueError(f"{path}: duplicate user {user_id}")
        seen_users.add(user_id)
        for item_id in items:
            if item_id not in catalog:
                raise ValueError(f"{path}: user {user_id} references unknown item {item_id}")
        if len(items) < min_length:
            dropped += 1
            continue
        kept.append((user_id, items))
    if dropped:
        logger.warning("dropped %d sequences shorter than %d interactions", dropped, min_length)
    return InteractionDataset(sequences=kept, split="all")


def split_leave_one_out(ds: InteractionDataset) -> tuple[InteractionDataset, InteractionDataset, InteractionDataset]:
    """Per user: last item is the test target, second-to-last the validation target.

    The returned valid/test datasets carry the evaluation prefix plus the
    target as the final element of each sequence.
    """
    train, valid, test = [], [], []
    for user_id, items in ds.sequences:
        if len(items) < MIN_SEQUENCE_LENGTH:
            raise ValueError(f"user {user_id}: sequence of length {len(items)} cannot be split")
        train.append((user_id, items[:-2]))
        valid.append((user_id, items[:-1]))
        test.append((user_id, list(items)))
    return (InteractionDataset(train, split="train"),
            InteractionDataset(valid, split="valid"),
            InteractionDataset(test, split="test"))


def popularity_counts(train: InteractionDataset, catalog: ItemCatalog) -> dict[int, int]:
    """Occurrences of each catalog item in the training histories (0 if absent)."""
    counts = {item_id: 0 for item_id in catalog.ids}
    for _, items in train.sequences:
        for item_id in items:
            counts[item_id] += 1
    return counts


def eval_instances(ds: InteractionDataset) -> list[tuple[int, list[int], int]]:
    """(user, input prefix, target) triples for a valid/test split."""
    out = []
    for user_id, items in ds.sequences:
        if len(items) < 2:
            continue
        out.append((user_id, items[:-1], items[-1]))
    return out


def train_pairs(ds: InteractionDataset) -> list[tuple[int, list[int], int]]:
    """All predict-next (user, prefix, target) pairs inside the train split."""
    out = []
    for user_id, items in ds.sequences:
        for t in range(1, len(items)):
            out.append((user_id, items[:t], items[t]))
    return out


@dataclass
class Dataset:
    """Everything the pipeline needs: catalog, feature tables, splits, popularity."""

    catalog: ItemCatalog
    text: FeatureTable
    visual: FeatureTable
    train: InteractionDataset
    valid: InteractionDataset
    test: InteractionDataset

    @property
    def raw_dims(self) -> tuple[int, int]:
        return self.text.dim, self.visual.dim


def load_dataset(catalog_path: str, text_path: str, visual_path: str,
                 interactions_path: str, min_length: int = MIN_SEQUENCE_LENGTH) -> Dataset:
    catalog = load_catalog(catalog_path)
    text = load_features(text_path, TEXT, catalog)
    visual = load_features(visual_path, VISUAL, catalog)
    interactions = load_interactions(interactions_path, catalog, min_length=min_length)
    train, valid, test = split_leave_one_out(interactions)
    catalog.popularity = popularity_counts(train, catalog)
    return Dataset(catalog=catalog, text=text, visual=visual,
                   train=train, valid=valid, test=test)
