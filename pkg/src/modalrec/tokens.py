"""Item tokens: feature augmentation, modality adapters, and sequence assembly.

Each interacted item contributes a text token and, when an image exists, a
visual token, interleaved per item (text before visual) so the final token
always belongs to the most recent item. Token positions are item-wise: both
tokens of the t-th item carry position t.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .data import TEXT, VISUAL, FeatureTable, ItemCatalog


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of ints/strings (process-independent)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, str):
            h.update(part.encode("utf-8"))
        else:
            h.update(struct.pack("<q", int(part)))
        h.update(b"/")
    return int.from_bytes(h.digest(), "little") & (2**63 - 1)


def augment(features: np.ndarray, rate: float, seed: int) -> np.ndarray:
    """Entrywise dropout with inverted scaling; deterministic per seed."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"augmentation rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return features
    rng = np.random.default_rng(seed)
    mask = (rng.random(features.shape) >= rate).astype(features.dtype)
    return features * mask / (1.0 - rate)


@dataclass
class Adapter:
    """Two-layer bottleneck projection from raw feature space to the latent width."""

    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter

    @property
    def in_dim(self) -> int:
        return self.w1.data.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.data.shape[1]

    def params(self, prefix: str) -> dict[str, Parameter]:
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
                f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int, hidden: int, out_dim: int,
               dtype=np.float32) -> "Adapter":
        def lin(n_in, n_out):
            scale = np.sqrt(2.0 / (n_in + n_out))
            return (rng.standard_normal((n_in, n_out)) * scale).astype(dtype)

        return cls(w1=Parameter(lin(in_dim, hidden)),
                   b1=Parameter(np.zeros(hidden, dtype=dtype)),
                   w2=Parameter(lin(hidden, out_dim)),
                   b2=Parameter(np.zeros(out_dim, dtype=dtype)))


def adapt(features, adapter: Adapter | None):
    """Project raw features through an adapter; ``None`` passes features through.

    Accepts a numpy batch or a graph tensor and returns the same kind.
    """
    if adapter is None:
        return features
    graph = isinstance(features, Tensor)
    x = features if graph else ad.constant(np.asarray(features, dtype=adapter.w1.dtype))
    if x.shape[-1] != adapter.in_dim:
        raise ValueError(f"feature dim {x.shape[-1]} does not match adapter input {adapter.in_dim}")
    h = ad.gelu(ad.add(ad.matmul(x, adapter.w1), adapter.b1))
    out = ad.add(ad.matmul(h, adapter.w2), adapter.b2)
    return out if graph else out.data


@dataclass
class TokenSequence:
    """Adapted item tokens with modality tags and item-wise positions."""

    vectors: Tensor                       # (L, d), graph-connected to the adapters
    keys: list[tuple[int, str]]           # (item_id, modality) per token
    positions: np.ndarray                 # 1-based item position per token
    item_ids: list[int]                   # item per token

    def __len__(self) -> int:
        return len(self.keys)


@dataclass
class Adapters:
    text: Adapter | None
    visual: Adapter | None

    def for_modality(self, modality: str) -> Adapter | None:
        return self.text if modality == TEXT else self.visual

    def params(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        if self.text is not None:
            out.update(self.text.params("adapter.text"))
        if self.visual is not None:
            out.update(self.visual.params("adapter.visual"))
        return out


def build_token_sequence(history: list[int], catalog: ItemCatalog,
                         text: FeatureTable, visual: FeatureTable,
                         adapters: Adapters, augment_rate: float = 0.0,
                         seed: int = 0, dtype=np.float32) -> TokenSequence:
    """Assemble the interleaved token sequence for one user history.

    With ``augment_rate`` 0 the result is a pure deterministic function of the
    tables and adapter parameters.
    """
    if not history:
        raise ValueError("empty history")
    keys: list[tuple[int, str]] = []
    positions: list[int] = []
    raw_text: list[np.ndarray] = []
    raw_visual: list[np.ndarray] = []
    for t, item_id in enumerate(history, start=1):
        keys.append((item_id, TEXT))
        positions.append(t)
        raw_text.append(text.rows[item_id])
        if catalog.has_image[catalog.dense[item_id]]:
            keys.append((item_id, VISUAL))
            positions.append(t)
            raw_visual.append(visual.rows[item_id])

    ft = np.stack(raw_text, axis=0).astype(dtype)
    fv = (np.stack(raw_visual, axis=0).astype(dtype)
          if raw_visual else np.zeros((0, visual.dim), dtype=dtype))
    if augment_rate > 0.0:
        ft = augment(ft, augment_rate, derive_seed(seed, TEXT))
        fv = augment(fv, augment_rate, derive_seed(seed, VISUAL))

    text_tokens = adapt(ad.constant(ft), adapters.text)
    vis_tokens = adapt(ad.constant(fv), adapters.visual) if len(raw_visual) else None

    rows: list[Tensor] = []
    ti = vi = 0
    for key in keys:
        if key[1] == TEXT:
            rows.append(ad.pick_row(text_tokens, ti))
            ti += 1
        else:
            rows.append(ad.pick_row(vis_tokens, vi))
            vi += 1
    vectors = ad.stack_rows(rows)
    return TokenSequence(vectors=vectors, keys=keys,
                         positions=np.asarray(positions, dtype=np.int64),
                         item_ids=[k[0] for k in keys])


def candidate_embeddings(item_id: int, catalog: ItemCatalog,
                         text: FeatureTable, visual: FeatureTable,
                         adapters: Adapters, dtype=np.float32) -> tuple[Tensor, Tensor | None]:
    """Adapted modality embeddings for one candidate item; never augmented.

    Returns (text vector, visual vector or None when the item has no image),
    both as graph tensors of width d.
    """
    if item_id not in catalog:
        raise KeyError(f"unknown item {item_id}")
    xt = adapt(ad.constant(text.rows[item_id][None, :].astype(dtype)), adapters.text)
    xt = ad.pick_row(xt, 0)
    xv = None
    if catalog.has_image[catalog.dense[item_id]]:
        xv = adapt(ad.constant(visual.rows[item_id][None, :].astype(dtype)), adapters.visual)
        xv = ad.pick_row(xv, 0)
    return xt, xv


def global_token_set(catalog: ItemCatalog, text: FeatureTable, visual: FeatureTable,
                     adapters: Adapters, dtype=np.float32) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Clean (non-augmented) tokens for every catalog item, as plain numpy.

    One text token per item plus one visual token per item with an image;
    this is the input to the epoch-wise interest clustering.
    """
    keys: list[tuple[int, str]] = [(i, TEXT) for i in catalog.ids]
    ft = text.matrix(catalog.ids).astype(dtype)
    mats = [np.asarray(adapt(ft, adapters.text), dtype=dtype)]
    vis_ids = [i for i in catalog.ids if catalog.has_image[catalog.dense[i]]]
    if vis_ids:
        keys.extend((i, VISUAL) for i in vis_ids)
        fv = visual.matrix(vis_ids).astype(dtype)
        mats.append(np.asarray(adapt(fv, adapters.visual), dtype=dtype))
    return np.concatenate(mats, axis=0), keys
