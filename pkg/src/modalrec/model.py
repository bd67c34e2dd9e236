"""Interest-aware encoder-decoder sequence model.

The contextual encoder runs standard pre-norm transformer blocks over the
deduplicated interest tokens (no positional embeddings there). The decoder
turns item tokens plus item-wise positional embeddings (plus optional item ID
embeddings) into queries, applies causal self-attention, cross-attends to the
encoded interests as key and value, and reads the sequence representation from
the last query position.

Ablation switches turn the model into a 2-block encoder-only variant (mean
pooled) or a 2-block decoder-only variant (cross-attention removed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .tokens import TokenSequence


@dataclass
class ModelConfig:
    d: int = 300
    encoder_blocks: int = 1
    decoder_blocks: int = 1
    heads: int = 2
    ffn_width: int = 0          # 0 = 2 * d
    max_seq_len: int = 50
    use_ids: bool = False
    adapter_hidden: int = 256
    encoder_only_2layer: bool = False
    decoder_only_2layer: bool = False

    def __post_init__(self):
        if self.ffn_width == 0:
            self.ffn_width = 2 * self.d
        if self.d % self.heads != 0:
            raise ValueError(f"latent width {self.d} not divisible by {self.heads} heads")
        if self.encoder_only_2layer and self.decoder_only_2layer:
            raise ValueError("at most one structural ablation can be active")
        if self.encoder_only_2layer:
            self.encoder_blocks, self.decoder_blocks = 2, 0
        if self.decoder_only_2layer:
            self.encoder_blocks, self.decoder_blocks = 0, 2


def _linear_params(rng: np.random.Generator, n_in: int, n_out: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    scale = np.sqrt(2.0 / (n_in + n_out))
    return ((rng.standard_normal((n_in, n_out)) * scale).astype(dtype),
            np.zeros(n_out, dtype=dtype))


def init_model_params(cfg: ModelConfig, rng: np.random.Generator, n_items: int,
                      dtype=np.float32) -> dict[str, Parameter]:
    """Positional/ID tables plus all encoder and decoder block weights."""
    params: dict[str, Parameter] = {}

    def add_linear(name: str, n_in: int, n_out: int):
        w, b = _linear_params(rng, n_in, n_out, dtype)
        params[f"{name}.w"] = Parameter(w, name=f"{name}.w")
        params[f"{name}.b"] = Parameter(b, name=f"{name}.b")

    def add_ln(name: str, width: int):
        params[f"{name}.gain"] = Parameter(np.ones(width, dtype=dtype), name=f"{name}.gain")
        params[f"{name}.bias"] = Parameter(np.zeros(width, dtype=dtype), name=f"{name}.bias")

    def add_attention(name: str):
        for proj in ("q", "k", "v", "o"):
            add_linear(f"{name}.{proj}", cfg.d, cfg.d)

    def add_ffn(name: str):
        add_linear(f"{name}.up", cfg.d, cfg.ffn_width)
        add_linear(f"{name}.down", cfg.ffn_width, cfg.d)

    for b in range(cfg.encoder_blocks):
        add_ln(f"enc.{b}.ln1", cfg.d)
        add_attention(f"enc.{b}.attn")
        add_ln(f"enc.{b}.ln2", cfg.d)
        add_ffn(f"enc.{b}.ffn")
    if cfg.encoder_blocks:
        add_ln("enc.final_ln", cfg.d)

    for b in range(cfg.decoder_blocks):
        add_ln(f"dec.{b}.ln1", cfg.d)
        add_attention(f"dec.{b}.self_attn")
        if not cfg.decoder_only_2layer:
            add_ln(f"dec.{b}.ln2", cfg.d)
            add_attention(f"dec.{b}.cross_attn")
        add_ln(f"dec.{b}.ln3", cfg.d)
        add_ffn(f"dec.{b}.ffn")
    if cfg.decoder_blocks:
        add_ln("dec.final_ln", cfg.d)
        pos = (rng.standard_normal((cfg.max_seq_len, cfg.d)) * 0.02).astype(dtype)
        params["pos.table"] = Parameter(pos, name="pos.table")

    if cfg.use_ids:
        ids = np.zeros((n_items, cfg.d), dtype=dtype)
        params["ids.table"] = Parameter(ids, name="ids.table")
    return params


def _affine_ln(params, name: str, x: Tensor) -> Tensor:
    normed = ad.layer_norm(x)
    return ad.add(ad.mul(normed, params[f"{name}.gain"]), params[f"{name}.bias"])


def _linear(params, name: str, x: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def multi_head_attention(params, name: str, q_in: Tensor, kv_in: Tensor,
                         heads: int, mask: np.ndarray | None = None,
                         probe: list | None = None) -> Tensor:
    """Standard multi-head attention; ``probe`` collects forward weight matrices."""
    q = _linear(params, f"{name}.q", q_in)
    k = _linear(params, f"{name}.k", kv_in)
    v = _linear(params, f"{name}.v", kv_in)
    d = q.shape[1]
    dh = d // heads
    outs = []
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        out, weights = ad.scaled_dot_attention(
            ad.slice_cols(q, lo, hi), ad.slice_cols(k, lo, hi),
            ad.slice_cols(v, lo, hi), mask=mask)
        outs.append(out)
        if probe is not None:
            probe.append(weights)
    return _linear(params, f"{name}.o", ad.concat(outs, axis=1))


def causal_mask(n: int, dtype=np.float32) -> np.ndarray:
    mask = np.zeros((n, n), dtype=dtype)
    mask[np.triu_indices(n, k=1)] = ad.NEG_INF
    return mask


def _ffn(params, name: str, x: Tensor) -> Tensor:
    return _linear(params, f"{name}.down", ad.gelu(_linear(params, f"{name}.up", x)))


def encode_context(interests: Tensor, params, cfg: ModelConfig,
                   probe: list | None = None) -> Tensor:
    """Pre-norm encoder over interest tokens; no positional embeddings."""
    if interests.shape[0] < 1:
        raise ValueError("empty interest sequence")
    x = interests
    for b in range(cfg.encoder_blocks):
        normed = _affine_ln(params, f"enc.{b}.ln1", x)
        x = x + multi_head_attention(params, f"enc.{b}.attn", normed, normed,
                                     cfg.heads, probe=probe)
        x = x + _ffn(params, f"enc.{b}.ffn", _affine_ln(params, f"enc.{b}.ln2", x))
    return _affine_ln(params, "enc.final_ln", x)


def decode_sequence(tokens: TokenSequence, encoded: Tensor | None, params,
                    cfg: ModelConfig, id_dense: np.ndarray | None = None,
                    probe: list | None = None) -> Tensor:
    """Decode item-token queries against the encoded interests; returns all outputs.

    The sequence representation is the last row of the result.
    """
    length = len(tokens)
    if length < 1:
        raise ValueError("empty token sequence")
    if tokens.positions.max() > cfg.max_seq_len:
        raise ValueError(f"item position {tokens.positions.max()} exceeds "
                         f"max_seq_len {cfg.max_seq_len}")
    q = tokens.vectors + ad.gather_rows(params["pos.table"], tokens.positions - 1)
    if id_dense is not None:
        q = q + ad.gather_rows(params["ids.table"], id_dense)
    mask = causal_mask(length, dtype=q.dtype)
    for b in range(cfg.decoder_blocks):
        normed = _affine_ln(params, f"dec.{b}.ln1", q)
        q = q + multi_head_attention(params, f"dec.{b}.self_attn", normed, normed,
                                     cfg.heads, mask=mask)
        if not cfg.decoder_only_2layer:
            q = q + multi_head_attention(params, f"dec.{b}.cross_attn",
                                         _affine_ln(params, f"dec.{b}.ln2", q),
                                         encoded, cfg.heads, probe=probe)
        q = q + _ffn(params, f"dec.{b}.ffn", _affine_ln(params, f"dec.{b}.ln3", q))
    return _affine_ln(params, "dec.final_ln", q)


def sequence_representation(tokens: TokenSequence, interests: Tensor | None, params,
                            cfg: ModelConfig, id_dense: np.ndarray | None = None,
                            probe: list | None = None) -> tuple[Tensor, Tensor | None]:
    """Run the configured architecture; returns (u, encoded interests or None)."""
    if cfg.encoder_only_2layer:
        encoded = encode_context(interests, params, cfg, probe=probe)
        return ad.mean_axis(encoded, axis=0), encoded
    if cfg.decoder_only_2layer:
        y = decode_sequence(tokens, None, params, cfg, id_dense=id_dense, probe=probe)
        return ad.pick_row(y, len(tokens) - 1), None
    encoded = encode_context(interests, params, cfg)
    y = decode_sequence(tokens, encoded, params, cfg, id_dense=id_dense, probe=probe)
    return ad.pick_row(y, len(tokens) - 1), encoded
