"""Command-line entry point: gen-synth, pretrain, finetune, eval, cluster-debug."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import TEXT, load_dataset
from .engine import Recommender
from .evaluation import evaluate, popularity_report, write_results_csv
from .fileio import load_checkpoint, save_checkpoint, write_feature_file
from .interests import ClusteringConfig
from .model import ModelConfig
from .report import plot_popularity_buckets, plot_training_curves
from .synth import SynthConfig, generate, write_dataset
from .training import TrainingConfig, train

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalrec",
        description="Multi-modal interest-aware sequential recommendation engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("gen-synth", "write a deterministic synthetic dataset"),
        ("pretrain", "contrastive pre-training"),
        ("finetune", "parameter-efficient fine-tuning from a checkpoint"),
        ("eval", "full-catalog ranking evaluation with reports"),
        ("cluster-debug", "dump the interest assignment of every item token"),
    ]:
        p = sub.add_parser(name, help=desc)
        p.add_argument("-c", "--config", default=None, help="key=value config file")
        p.add_argument("overrides", nargs="*", help="key=value overrides")
    return parser


def _model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(d=cfg.d, encoder_blocks=cfg.encoder_blocks,
                       decoder_blocks=cfg.decoder_blocks, heads=cfg.heads,
                       ffn_width=cfg.ffn_width, max_seq_len=cfg.max_seq_len,
                       use_ids=cfg.use_ids, adapter_hidden=cfg.adapter_hidden,
                       encoder_only_2layer=cfg.encoder_only_2layer,
                       decoder_only_2layer=cfg.decoder_only_2layer)


def _clustering_config(cfg: RunConfig, stage: str) -> ClusteringConfig:
    ratio = cfg.pretrain_proto_ratio if stage == "pretrain" else cfg.finetune_proto_ratio
    return ClusteringConfig(knn_k=cfg.knn_k, prototype_ratio=ratio,
                            prototype_count=cfg.proto_count)


def _training_config(cfg: RunConfig, stage: str) -> TrainingConfig:
    return TrainingConfig(stage=stage, mode=cfg.mode, batch_size=cfg.batch_size,
                          tau=cfg.tau, ss_weight=cfg.ss_weight,
                          ortho_weight=cfg.ortho_weight, lr=cfg.lr,
                          epochs=cfg.epochs, patience=cfg.patience,
                          augment_rate=cfg.augment_rate, seed=cfg.seed,
                          clip_norm=cfg.clip_norm, eval_every=cfg.eval_every,
                          si_views=cfg.si_views, ss_exclude_self=cfg.ss_exclude_self,
                          disable_ss_loss=cfg.disable_ss_loss,
                          disable_ortho=cfg.disable_ortho)


def _build_engine(cfg: RunConfig, stage: str) -> Recommender:
    for key in ("catalog", "text_features", "visual_features", "interactions"):
        path = getattr(cfg, key)
        if not path:
            raise ConfigError(f"config key {key!r} is required for this command")
        if not os.path.exists(path):
            raise ConfigError(f"config key {key!r}: file not found: {path}")
    dataset = load_dataset(cfg.catalog, cfg.text_features, cfg.visual_features,
                           cfg.interactions, min_length=cfg.min_seq_len)
    rec = Recommender.build(dataset, _model_config(cfg), _clustering_config(cfg, stage),
                            seed=cfg.seed, use_adapters=not cfg.disable_adapters)
    if cfg.checkpoint:
        arrays, _ = load_checkpoint(cfg.checkpoint)
        known = {k: v for k, v in arrays.items() if k in rec.params}
        for name in arrays.keys() - known.keys():
            logger.warning("checkpoint parameter %s not in this model; skipped", name)
        rec.load_arrays(known)
    return rec


def _save_with_mapping(rec: Recommender, path: str) -> None:
    save_checkpoint(path, rec.params)
    # dense-index mapping travels with every checkpoint
    with open(path + ".items.tsv", "w", encoding="utf-8") as fh:
        for dense, item_id in enumerate(rec.dataset.catalog.ids):
            fh.write(f"{dense}\t{item_id}\n")


def cmd_gen_synth(cfg: RunConfig) -> int:
    synth = SynthConfig(n_items=cfg.synth_items, n_users=cfg.synth_users,
                        dim=cfg.synth_dim, n_clusters=cfg.synth_clusters,
                        image_coverage=cfg.synth_image_coverage,
                        seq_len_min=cfg.synth_seq_min, seq_len_max=cfg.synth_seq_max,
                        center_scale=cfg.synth_center_scale,
                        noise_scale=cfg.synth_noise_scale, seed=cfg.seed)
    paths = write_dataset(generate(synth), synth, cfg.out_dir)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def cmd_train(cfg: RunConfig, stage: str) -> int:
    rec = _build_engine(cfg, stage)
    if stage == "finetune" and not cfg.checkpoint:
        logger.warning("fine-tuning from fresh initialization (no checkpoint given)")
    os.makedirs(cfg.out_dir, exist_ok=True)
    log_path = os.path.join(cfg.out_dir, f"{stage}_log.csv")
    result = train(rec, _training_config(cfg, stage), log_path=log_path)
    ckpt = os.path.join(cfg.out_dir, f"{stage}.mmck")
    _save_with_mapping(rec, ckpt)
    if result.logs:
        plot_training_curves(result.logs, os.path.join(cfg.out_dir, f"{stage}_curves.png"))
    best = f", best valid R@10 {result.best_valid_r10:.4f} at epoch {result.best_epoch}" \
        if result.best_epoch > 0 else ""
    print(f"{stage} finished after {len(result.logs)} epochs{best}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    rec = _build_engine(cfg, "finetune")
    rec.refresh_index()
    os.makedirs(cfg.out_dir, exist_ok=True)
    split = rec.dataset.test if cfg.eval_split == "test" else rec.dataset.valid
    transductive = cfg.mode == "transductive"
    result = evaluate(rec, split, ks=tuple(cfg.ks), transductive=transductive,
                      workers=cfg.workers)
    buckets = popularity_report(result, rec.dataset.catalog.popularity, cfg.bucket_edges)
    csv_path = os.path.join(cfg.out_dir, "results.csv")
    write_results_csv(csv_path, result.aggregates, buckets)
    plot_popularity_buckets(buckets, os.path.join(cfg.out_dir, "popularity.png"))
    if cfg.dump_scores:
        _dump_score_matrices(rec, split, cfg.out_dir, transductive)
    for key in sorted(result.aggregates):
        print(f"{key}: {result.aggregates[key]:.4f}")
    print(f"results: {csv_path}")
    return 0


def _dump_score_matrices(rec: Recommender, split, out_dir: str, transductive: bool) -> None:
    """Persist per-modality score matrices in the binary feature format (row per user)."""
    from .data import eval_instances

    bank = rec.candidate_bank()
    rows_t, rows_v = [], []
    for user_id, prefix, _ in eval_instances(split):
        u = rec.represent(prefix, use_ids=transductive).u.data.astype(np.float64)
        _, s_text, s_visual = rec.score_all_items(u, bank, transductive=transductive)
        rows_t.append((user_id, s_text.astype(np.float32)))
        rows_v.append((user_id, s_visual.astype(np.float32)))
    n = len(bank)
    write_feature_file(os.path.join(out_dir, "scores_text.mmf"), n, rows_t)
    write_feature_file(os.path.join(out_dir, "scores_visual.mmf"), n, rows_v)


def cmd_cluster_debug(cfg: RunConfig) -> int:
    rec = _build_engine(cfg, "pretrain")
    index = rec.refresh_index()
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "cluster_debug.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        for (item_id, modality), proto in sorted(index.assignment.items(),
                                                 key=lambda kv: (kv[0][0], kv[0][1] != TEXT)):
            fh.write(f"{item_id}\t{modality}\t{proto}\n")
    print(f"{len(index.assignment)} tokens, {index.count} prototypes")
    print(f"assignment: {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "gen-synth":
            return cmd_gen_synth(cfg)
        if args.command == "pretrain":
            return cmd_train(cfg, "pretrain")
        if args.command == "finetune":
            return cmd_train(cfg, "finetune")
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "cluster-debug":
            return cmd_cluster_debug(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
