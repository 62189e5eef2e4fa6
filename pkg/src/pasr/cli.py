"""Command line: ``pasr {ingest,train,evaluate,encode-geohash,synth,ablate}``."""

import argparse
import logging
import os
import sys

from . import config as config_mod
from . import geocode
from .checkpoint import CheckpointError
from .metrics import MetricError, format_comparison, format_table
from .pipeline import runs
from .pipeline.dataset import DatasetError, filter_dataset, format_summary, ingest, write_checkins
from .pipeline.synthetic import SyntheticSpec, SyntheticSpecError, generate_synthetic
from .pipeline.training import TrainingDiverged
from .sampling import SamplingError

log = logging.getLogger("pasr")

# flag -> (RunConfig key, type)
_VALUE_FLAGS = [
    ("--dataset", "dataset", str),
    ("--format", "dataset_format", str),
    ("--d", "d", int),
    ("--d-h", "d_h", int),
    ("--layers", "n_layers", int),
    ("--m", "m", int),
    ("--ngram", "ngram", int),
    ("--geohash-len", "geohash_len", int),
    ("--grid-intervals", "grid_intervals", int),
    ("--knn", "knn", int),
    ("--neg-count", "neg_count", int),
    ("--temperature", "temperature", float),
    ("--knn-anchor", "knn_anchor", str),
    ("--epochs", "epochs", int),
    ("--seed", "seed", int),
    ("--split-seed", "split_seed", int),
    ("--batch-size", "batch_size", int),
    ("--lr", "lr", float),
    ("--weight-decay", "weight_decay", float),
    ("--eval-negatives", "eval_negatives", int),
    ("--min-user-checkins", "min_user_checkins", int),
    ("--min-loc-visits", "min_loc_visits", int),
    ("--output-dir", "output_dir", str),
]
_OFF_FLAGS = [
    ("--no-geo-encoder", "use_geo_encoder"),
    ("--no-grid-mapper", "use_grid_mapper"),
    ("--no-target-decoder", "use_target_decoder"),
    ("--unweighted-loss", "weighted_loss"),
]


def _add_run_flags(p):
    p.add_argument("--config", help="key=value run configuration to start from")
    for flag, key, kind in _VALUE_FLAGS:
        p.add_argument(flag, dest=key, type=kind, default=None)
    p.add_argument("--sampler", choices=["uniform", "knn-uniform", "knn-popularity"], default=None)
    for flag, key in _OFF_FLAGS:
        p.add_argument(flag, dest=key, action="store_const", const=False, default=None)


def resolve_config(args):
    """Defaults, then ``--config``, then explicit flags."""
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    over = {key: getattr(args, key) for _, key, _ in _VALUE_FLAGS if getattr(args, key) is not None}
    over.update({key: False for _, key in _OFF_FLAGS if getattr(args, key) is not None})
    if args.sampler is not None:
        over["sampler"] = args.sampler.replace("-", "_")
    return cfg.with_overrides(**over)


def build_parser():
    parser = argparse.ArgumentParser(prog="pasr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and summarize a check-in file")
    p.add_argument("path")
    p.add_argument("--format", default="auto", choices=["auto", "iso", "epoch"])
    p.add_argument("--min-user-checkins", type=int, default=20)
    p.add_argument("--min-loc-visits", type=int, default=10)

    p = sub.add_parser("train", help="train a model; writes checkpoint, log and metrics")
    _add_run_flags(p)

    p = sub.add_parser("evaluate", help="print the metric table of a checkpoint")
    _add_run_flags(p)
    p.add_argument("--checkpoint", help="defaults to <output-dir>/model.ckpt")

    p = sub.add_parser("encode-geohash", help="read 'lat lon [length]' lines from stdin")
    p.add_argument("--length", type=int, default=12)

    p = sub.add_parser("synth", help="write a planted synthetic check-in file")
    p.add_argument("--output", default="synthetic.tsv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=SyntheticSpec.n_users)
    p.add_argument("--locations", type=int, default=SyntheticSpec.n_locations)
    p.add_argument("--clusters", type=int, default=SyntheticSpec.n_clusters)
    p.add_argument("--locality", type=float, default=SyntheticSpec.locality)
    p.add_argument("--pair-strength", type=float, default=SyntheticSpec.pair_strength)
    p.add_argument("--checkins-per-user", type=int, default=SyntheticSpec.checkins_per_user)
    p.add_argument("--format", default="iso", choices=["iso", "epoch"])

    p = sub.add_parser("ablate", help="train the ablation variants and compare them")
    _add_run_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", help="training seeds (default: --seed)")
    p.add_argument("--variants", nargs="+", choices=list(runs.ABLATIONS),
                   help="subset of variants; the table keeps the standard order")
    return parser


def cmd_ingest(args, out):
    ds = ingest(args.path, args.format)
    out.write("raw\n" + format_summary(ds.summary()) + f"\nmalformed\t{ds.malformed}\n")
    kept = filter_dataset(ds, args.min_user_checkins, args.min_loc_visits)
    out.write("filtered\n" + format_summary(kept.summary()) + "\n")
    return 0


def cmd_train(args, out):
    cfg = resolve_config(args)
    prepared = runs.prepare(cfg)
    result, metrics = runs.run_training(cfg, prepared)
    out.write(f"wrote {cfg.output_dir}\n")
    out.write(format_table([("PASR", metrics)]))
    return 0


def cmd_evaluate(args, out):
    cfg = resolve_config(args)
    ckpt = args.checkpoint or os.path.join(cfg.output_dir, "model.ckpt")
    metrics = runs.evaluate_checkpoint(cfg, ckpt, runs.prepare(cfg))
    out.write(format_table([("PASR", metrics)]))
    return 0


def cmd_encode_geohash(args, out):
    for lineno, line in enumerate(sys.stdin, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (2, 3):
            raise geocode.GeocodeError(f"stdin line {lineno}: expected 'lat lon [length]'")
        try:
            lat, lon = float(parts[0]), float(parts[1])
            length = int(parts[2]) if len(parts) == 3 else args.length
        except ValueError:
            raise geocode.GeocodeError(f"stdin line {lineno}: not a number") from None
        out.write(geocode.encode_geohash(geocode.GeoCoordinate(lat, lon), length) + "\n")
    return 0


def cmd_synth(args, out):
    spec = SyntheticSpec(n_users=args.users, n_locations=args.locations, n_clusters=args.clusters,
                         locality=args.locality, pair_strength=args.pair_strength,
                         checkins_per_user=args.checkins_per_user)
    ds = generate_synthetic(spec, seed=args.seed)
    write_checkins(ds, args.output, args.format)
    out.write(f"wrote {len(ds)} check-ins to {args.output}\n")
    return 0


def cmd_ablate(args, out):
    cfg = resolve_config(args)
    prepared = runs.prepare(cfg)
    results = runs.run_ablation(cfg, prepared, seeds=args.seeds, variants=args.variants)
    out.write(format_comparison(results))
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "encode-geohash": cmd_encode_geohash,
    "synth": cmd_synth,
    "ablate": cmd_ablate,
}

# failures reported as a one-line diagnostic (exit 1) instead of a traceback
_EXPECTED = (config_mod.ConfigError, DatasetError, geocode.GeocodeError, CheckpointError, MetricError,
             SamplingError, SyntheticSpecError, TrainingDiverged, ValueError, OSError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, sys.stdout)
    except _EXPECTED as exc:
        print(f"pasr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
