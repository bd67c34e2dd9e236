"""Run configuration: key=value files with typed fields and CLI overrides.

Precedence is defaults < config file < command-line overrides. Unknown keys
are rejected by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .data import MIN_SEQUENCE_LENGTH


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data paths
    catalog: str = ""
    text_features: str = ""
    visual_features: str = ""
    interactions: str = ""
    out_dir: str = "out"
    checkpoint: str = ""             # input checkpoint for finetune/eval
    min_seq_len: int = MIN_SEQUENCE_LENGTH

    # model
    d: int = 300
    heads: int = 2
    encoder_blocks: int = 1
    decoder_blocks: int = 1
    ffn_width: int = 0
    max_seq_len: int = 50
    adapter_hidden: int = 256
    use_ids: bool = False
    disable_adapters: bool = False
    encoder_only_2layer: bool = False
    decoder_only_2layer: bool = False

    # interest clustering
    knn_k: int = 0
    pretrain_proto_ratio: float = 0.02
    finetune_proto_ratio: float = 0.5
    proto_count: int = 0

    # training
    mode: str = "inductive"
    batch_size: int = 16
    tau: float = 0.07
    ss_weight: float = 1e-3
    ortho_weight: float = 1e-4
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 10
    augment_rate: float = 0.1
    seed: int = 42
    clip_norm: float = 5.0
    eval_every: int = 1
    si_views: str = "first"
    ss_exclude_self: bool = False
    disable_ss_loss: bool = False
    disable_ortho: bool = False
    workers: int = 1

    # evaluation
    eval_split: str = "test"
    ks: list[int] = field(default_factory=lambda: [10, 50])
    bucket_edges: list[float] = field(default_factory=lambda: [0.0, 1.0, 5.0, 20.0])
    dump_scores: bool = False

    # synthetic data generation
    synth_items: int = 100
    synth_users: int = 50
    synth_dim: int = 16
    synth_clusters: int = 4
    synth_image_coverage: float = 1.0
    synth_seq_min: int = 5
    synth_seq_max: int = 10
    synth_center_scale: float = 10.0
    synth_noise_scale: float = 0.1


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _parse_value(key: str, raw: str):
    default = getattr(_DEFAULTS, key)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            if not raw:
                return []
            elem = type(default[0]) if default else float
            return [elem(tok) for tok in raw.split(",")]
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def parse_assignment(cfg: RunConfig, line: str, where: str) -> None:
    if "=" not in line:
        raise ConfigError(f"{where}: expected key=value, got {line!r}")
    key, raw = line.split("=", 1)
    key = key.strip()
    if key not in _FIELD_TYPES:
        raise ConfigError(f"{where}: unknown config key {key!r}")
    setattr(cfg, key, _parse_value(key, raw))


def load_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus key=value override strings."""
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parse_assignment(cfg, line, f"{path}:{lineno}")
    for ov in overrides or []:
        parse_assignment(cfg, ov, "override")
    return cfg
