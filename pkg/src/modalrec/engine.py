"""Recommender bundle: parameters, epoch index, and forward passes over users."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .data import TEXT, VISUAL, Dataset
from .fusion import CandidateBank, alpha_value, fused_score_matrix, make_alpha_param, score_bank
from .interests import ClusteringConfig, InterestIndex, refresh, translate
from .model import ModelConfig, init_model_params, sequence_representation
from .tokens import Adapter, Adapters, TokenSequence, adapt, build_token_sequence, derive_seed, global_token_set

ADAPTER_PREFIX = "adapter."
ID_TABLE = "ids.table"


@dataclass
class Representation:
    u: Tensor                      # sequence embedding (d,)
    encoded: Tensor | None         # encoded interest tokens (M, d)
    tokens: TokenSequence


class Recommender:
    """Holds the parameter set and runs user-level forward passes.

    Forward evaluation against frozen parameters is safe to run from several
    threads; training steps mutate parameters and are single-threaded.
    """

    def __init__(self, dataset: Dataset, model_cfg: ModelConfig,
                 clustering_cfg: ClusteringConfig, adapters: Adapters,
                 params: dict[str, Parameter], dtype=np.float32):
        self.dataset = dataset
        self.cfg = model_cfg
        self.clustering = clustering_cfg
        self.adapters = adapters
        self.params = params
        self.dtype = dtype
        self.index: InterestIndex | None = None

    @classmethod
    def build(cls, dataset: Dataset, model_cfg: ModelConfig,
              clustering_cfg: ClusteringConfig, seed: int,
              use_adapters: bool = True, dtype=np.float32) -> "Recommender":
        rng = np.random.default_rng(derive_seed(seed, "init"))
        text_dim, visual_dim = dataset.raw_dims
        if use_adapters:
            adapters = Adapters(
                text=Adapter.create(rng, text_dim, model_cfg.adapter_hidden, model_cfg.d, dtype),
                visual=Adapter.create(rng, visual_dim, model_cfg.adapter_hidden, model_cfg.d, dtype))
        else:
            # identity tokenization: the model consumes raw features directly
            if text_dim != model_cfg.d or visual_dim != model_cfg.d:
                raise ValueError(f"without adapters the latent width ({model_cfg.d}) must equal "
                                 f"the raw feature dims ({text_dim}, {visual_dim})")
            adapters = Adapters(text=None, visual=None)
        params = dict(adapters.params())
        params.update(init_model_params(model_cfg, rng, n_items=len(dataset.catalog), dtype=dtype))
        params["fusion.raw_alpha"] = make_alpha_param(dtype)
        return cls(dataset, model_cfg, clustering_cfg, adapters, params, dtype)

    # ---- parameter management -------------------------------------------------

    @property
    def alpha(self) -> float:
        return alpha_value(float(self.params["fusion.raw_alpha"].data))

    def set_stage_trainable(self, stage: str, mode: str = "inductive") -> None:
        """Pre-training tunes everything; fine-tuning only adapters (+ IDs when transductive)."""
        for name, p in self.params.items():
            if stage == "pretrain":
                p.set_trainable(True)
            else:
                tunable = name.startswith(ADAPTER_PREFIX) or (
                    mode == "transductive" and name == ID_TABLE)
                p.set_trainable(tunable)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, arr in snap.items():
            self.params[name].data = arr.copy()

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values from a checkpoint, validating shapes."""
        for name, arr in arrays.items():
            if name not in self.params:
                raise KeyError(f"checkpoint parameter {name} not in this model")
            if tuple(arr.shape) != tuple(self.params[name].data.shape):
                raise ValueError(f"checkpoint shape mismatch for {name}: "
                                 f"{arr.shape} vs {self.params[name].data.shape}")
            self.params[name].data = arr.astype(self.dtype)

    # ---- epoch-wise interest index --------------------------------------------

    def refresh_index(self) -> InterestIndex:
        tokens, keys = global_token_set(self.dataset.catalog, self.dataset.text,
                                        self.dataset.visual, self.adapters, dtype=self.dtype)
        self.index = refresh(tokens, keys, self.clustering, n_items=len(self.dataset.catalog))
        return self.index

    def interest_vectors(self, prototype_ids: list[int]) -> Tensor:
        """Prototype token vectors recomputed through the current adapters.

        The cluster assignment is frozen for the epoch but the vectors stay
        differentiable with respect to the adapters.
        """
        rows = []
        for pid in prototype_ids:
            item_id, modality = self.index.prototype_keys[pid]
            table = self.dataset.text if modality == TEXT else self.dataset.visual
            adapter = self.adapters.for_modality(modality)
            raw = ad.constant(table.rows[item_id][None, :].astype(self.dtype))
            rows.append(ad.pick_row(adapt(raw, adapter), 0))
        return ad.stack_rows(rows)

    # ---- forward passes --------------------------------------------------------

    def represent(self, history: list[int], augment_rate: float = 0.0,
                  seed: int = 0, use_ids: bool = False,
                  probe: list | None = None) -> Representation:
        """Sequence representation for one user history (truncated to the most recent items)."""
        history = history[-self.cfg.max_seq_len:]
        tokens = build_token_sequence(history, self.dataset.catalog, self.dataset.text,
                                      self.dataset.visual, self.adapters,
                                      augment_rate=augment_rate, seed=seed, dtype=self.dtype)
        interests = None
        if not self.cfg.decoder_only_2layer:
            if self.index is None:
                raise RuntimeError("interest index not built; call refresh_index() first")
            proto_ids = translate(tokens.keys, self.index)
            interests = self.interest_vectors(proto_ids)
        id_dense = None
        if use_ids:
            if ID_TABLE not in self.params:
                raise ValueError("transductive representation requested without an ID table")
            id_dense = np.asarray([self.dataset.catalog.dense[i] for i in tokens.item_ids],
                                  dtype=np.int64)
        u, encoded = sequence_representation(tokens, interests, self.params, self.cfg,
                                             id_dense=id_dense, probe=probe)
        return Representation(u=u, encoded=encoded, tokens=tokens)

    def target_embeddings(self, item_ids: list[int]) -> tuple[Tensor, Tensor, np.ndarray]:
        """Clean adapted embeddings for a list of candidate items (graph tensors).

        Visual rows of image-less items are zeros and masked out downstream.
        """
        catalog = self.dataset.catalog
        ft = self.dataset.text.matrix(item_ids).astype(self.dtype)
        xt = adapt(ad.constant(ft), self.adapters.text)
        if not isinstance(xt, Tensor):
            xt = ad.constant(xt)
        has_visual = np.asarray([catalog.has_image[catalog.dense[i]] for i in item_ids])
        vis_ids = [i for i, hv in zip(item_ids, has_visual) if hv]
        d = self.cfg.d
        if vis_ids:
            fv = self.dataset.visual.matrix(vis_ids).astype(self.dtype)
            xv_rows = adapt(ad.constant(fv), self.adapters.visual)
            if not isinstance(xv_rows, Tensor):
                xv_rows = ad.constant(xv_rows)
            zero = ad.constant(np.zeros(d, dtype=self.dtype))
            rows, vi = [], 0
            for hv in has_visual:
                if hv:
                    rows.append(ad.pick_row(xv_rows, vi))
                    vi += 1
                else:
                    rows.append(zero)
            xv = ad.stack_rows(rows)
        else:
            xv = ad.constant(np.zeros((len(item_ids), d), dtype=self.dtype))
        return xt, xv, has_visual

    def batch_score_matrix(self, u_rows: Tensor, target_ids: list[int],
                           transductive: bool = False) -> Tensor:
        """(B, B) fused match scores between batch representations and batch targets."""
        xt, xv, has_visual = self.target_embeddings(target_ids)
        s_text = ad.matmul(u_rows, ad.transpose(xt))
        s_visual = ad.matmul(u_rows, ad.transpose(xv))
        scores = fused_score_matrix(s_text, s_visual, has_visual,
                                    self.params["fusion.raw_alpha"])
        if transductive:
            dense = np.asarray([self.dataset.catalog.dense[i] for i in target_ids], dtype=np.int64)
            z = ad.gather_rows(self.params[ID_TABLE], dense)
            scores = scores + ad.matmul(u_rows, ad.transpose(z))
        return scores

    # ---- evaluation-side scoring ------------------------------------------------

    def candidate_bank(self) -> CandidateBank:
        """Clean numpy embeddings for the whole catalog (no gradients)."""
        catalog = self.dataset.catalog
        xt, xv, has_visual = self.target_embeddings(catalog.ids)
        return CandidateBank(ids=np.asarray(catalog.ids, dtype=np.int64),
                             text=xt.data.copy(), visual=xv.data.copy(),
                             has_visual=has_visual)

    def score_all_items(self, u: np.ndarray, bank: CandidateBank,
                        transductive: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        id_table = self.params[ID_TABLE].data if transductive else None
        return score_bank(u, bank, self.alpha, id_table=id_table)


def view_seed(global_seed: int, epoch: int, user_id: int, view: int) -> int:
    return derive_seed(global_seed, "view", epoch, user_id, view)
