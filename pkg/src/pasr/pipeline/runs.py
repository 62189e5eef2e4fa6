"""End-to-end runs: data preparation, training, evaluation and output files.

Every run directory holds ``config.txt`` (the resolved configuration),
``model.ckpt``, ``train.log`` (epoch, mean loss, wall seconds), ``metrics.tsv``
and ``metrics.txt``. Everything except the wall-time column is reproducible
bit for bit from ``config.txt``.
"""

import logging
import os
from collections import OrderedDict

import numpy as np

from .. import checkpoint
from .. import config as config_mod
from ..metrics import evaluate, format_comparison, format_kv, format_table
from ..sampling import KnnIndex, SamplingError, build_knn_index, dataset_hash, index_sidecar_name
from .dataset import DatasetError, filter_dataset, ingest
from .sequences import build_sequences
from .training import train

log = logging.getLogger(__name__)

METRIC_KS = (5, 10)

# column order of the ablation table
ABLATIONS = OrderedDict([
    ("PASR", {}),
    ("US", {"sampler": "uniform"}),
    ("BCE", {"weighted_loss": False}),
    ("-GE", {"use_geo_encoder": False}),
    ("-GM", {"use_grid_mapper": False}),
    ("-GE-GM", {"use_geo_encoder": False, "use_grid_mapper": False}),
    ("-TAAD", {"use_target_decoder": False}),
])


def load_dataset(cfg):
    if not cfg.dataset:
        raise DatasetError("no dataset given")
    ds = ingest(cfg.dataset, cfg.dataset_format)
    return filter_dataset(ds, cfg.min_user_checkins, cfg.min_loc_visits)


def prepare(cfg, ds=None):
    """Filtered dataset -> training chunks and evaluation splits."""
    ds = load_dataset(cfg) if ds is None else ds
    return build_sequences(ds, cfg.m, cfg.eval_negatives, cfg.split_seed)


def knn_index(cfg, prepared, cache_dir=None):
    """Neighbour index for kNN samplers, reused from ``cache_dir`` when it matches."""
    if cfg.sampler == "uniform":
        return None
    table = prepared.table
    key = dataset_hash(table.lat, table.lon)
    path = os.path.join(cache_dir, index_sidecar_name(key, cfg.knn)) if cache_dir else None
    if path and os.path.exists(path):
        try:
            return KnnIndex.load(path, key, cfg.knn)
        except SamplingError as exc:
            log.warning("rebuilding neighbour index: %s", exc)
    index = build_knn_index(table.lat, table.lon, cfg.knn)
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        index.save(path, key)
    return index


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_training(cfg, prepared, out_dir=None, index=None):
    """Train, evaluate on the held-out split and write the run directory."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    config_mod.save(cfg, os.path.join(out_dir, "config.txt"))
    if index is None:
        index = knn_index(cfg, prepared, out_dir)
    result = train(cfg, prepared, index=index)
    checkpoint.save(os.path.join(out_dir, "model.ckpt"), result.model)
    _write(os.path.join(out_dir, "train.log"), "".join(line + "\n" for line in result.log_lines))
    metrics, _ = evaluate(result.model, prepared.test, ks=METRIC_KS)
    write_metrics(out_dir, metrics)
    return result, metrics


def write_metrics(out_dir, metrics, name="PASR"):
    _write(os.path.join(out_dir, "metrics.tsv"), format_table([(name, metrics)]))
    _write(os.path.join(out_dir, "metrics.txt"), format_kv(metrics))


def evaluate_checkpoint(cfg, ckpt_path, prepared):
    """Metrics of a stored model on the split rebuilt from ``cfg``."""
    model = checkpoint.load(ckpt_path, expected=cfg.model_config())
    if not np.array_equal(model.table.raw_ids, prepared.table.raw_ids):
        raise checkpoint.CheckpointError("checkpoint locations do not match the dataset")
    metrics, _ = evaluate(model, prepared.test, ks=METRIC_KS)
    return metrics


def run_ablation(cfg, prepared, seeds=None, variants=None, out_dir=None):
    """Train every variant for every seed; returns ``{variant: mean metrics}``.

    Variants share the base configuration and the evaluation split; only the
    ablated switch changes. Per-variant, per-seed runs land in
    ``out_dir/<variant>/seed<s>``.
    """
    out_dir = out_dir or cfg.output_dir
    seeds = [cfg.seed] if seeds is None else list(seeds)
    names = list(ABLATIONS) if variants is None else [v for v in ABLATIONS if v in variants]
    unknown = set(variants or ()) - set(ABLATIONS)
    if unknown:
        raise ValueError(f"unknown ablation variants: {sorted(unknown)}")
    results = OrderedDict()
    for name in names:
        per_seed = []
        for seed in seeds:
            vcfg = cfg.with_overrides(seed=seed, **ABLATIONS[name])
            run_dir = os.path.join(out_dir, _dirname(name), f"seed{seed}")
            _, metrics = run_training(vcfg, prepared, run_dir, index=knn_index(vcfg, prepared, out_dir))
            per_seed.append(metrics)
        results[name] = OrderedDict((k, float(np.mean([m[k] for m in per_seed]))) for k in per_seed[0])
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "ablation.tsv"), format_comparison(results))
    return results


def _dirname(variant):
    # "-GE-GM" -> "no-GE-GM"
    return "no" + variant if variant.startswith("-") else variant
