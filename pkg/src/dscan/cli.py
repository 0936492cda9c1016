"""Batch command-line interface.

Subcommands: extract, train, evaluate, sweep-beta, project, analyze.
Exit code 0 on success; on failure a single machine-readable JSON error
line goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import DscanError
from .storage import FeatureStore, read_manifest
from . import pipeline

CONFIG_KEYS = ("seed", "k", "beta", "lr", "batch_size", "pretrain_iters", "max_iters",
               "epsilon", "target_update_interval", "alpha", "kmeans_restarts",
               "sample_rate", "frame_ms", "hop_ms", "n_mels", "target_frames")


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    for key in CONFIG_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                            help=f"override config key {key}")


def _build_config(args):
    overrides = {key: getattr(args, key) for key in CONFIG_KEYS if getattr(args, key, None)
                 is not None}
    return load_config(args.config, overrides)


def build_parser():
    parser = argparse.ArgumentParser(prog="dscan",
                                     description="Cluster audio clips by domestic activity "
                                                 "with a depthwise-separable conv autoencoder.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="WAV manifest -> log-mel feature store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output feature store path")
    _add_config_flags(p)

    p = sub.add_parser("train", help="feature store -> assignments, history, checkpoint")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="assignments + labeled manifest -> metrics JSON")
    p.add_argument("--assignments", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("sweep-beta", help="one full run per beta; CSV of beta,nmi,ca")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--betas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
                   help="comma-separated beta grid")
    _add_config_flags(p)

    p = sub.add_parser("project", help="checkpoint + store + assignments -> 2-D PCA CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("analyze", help="per-layer MACs/params report JSON")
    p.add_argument("--out", required=True, help="output JSON path")

    return parser


def _cmd_extract(args):
    config = _build_config(args)
    rows = read_manifest(args.manifest)
    store, errors = pipeline.extract_features(rows, config)
    store.save(args.out)
    for err in errors:
        print(json.dumps({"warning": "clip skipped", **err}), file=sys.stderr)
    print(json.dumps({"written": args.out, "clips": len(store), "skipped": len(errors)}))


def _cmd_train(args):
    config = _build_config(args)
    store = FeatureStore.load(args.store)
    result, paths = pipeline.run_clustering(config, store, args.out)
    print(json.dumps({
        "assignments": str(paths["assignments"]),
        "history": str(paths["history"]),
        "checkpoint": str(paths["checkpoint"]),
        "iterations": result.iterations_run,
        "stopped_early": result.stopped_early,
    }))


def _cmd_evaluate(args):
    assignments = pipeline.load_assignments(args.assignments)
    rows = read_manifest(args.manifest)
    report = pipeline.evaluate(assignments, rows)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps({"written": args.out, "nmi": report["nmi"], "ca": report["ca"]}))


def _cmd_sweep(args):
    config = _build_config(args)
    store = FeatureStore.load(args.store)
    manifest_rows = read_manifest(args.manifest)
    grid = [float(b) for b in args.betas.split(",") if b.strip()]
    if not grid:
        raise DscanError("beta grid is empty")
    rows = pipeline.sweep_beta(config, store, grid, manifest_rows)
    pipeline.write_sweep_csv(args.out, rows)
    for row in rows:
        if row["error"]:
            print(json.dumps({"warning": "beta run failed", "beta": row["beta"],
                              "error": row["error"]}), file=sys.stderr)
    print(json.dumps({"written": args.out, "runs": len(rows),
                      "failures": sum(1 for r in rows if r["error"])}))


def _cmd_project(args):
    store = FeatureStore.load(args.store)
    assignments = pipeline.load_assignments(args.assignments)
    rows = pipeline.project_embeddings(args.checkpoint, store, assignments)
    pipeline.write_projection_csv(args.out, rows)
    print(json.dumps({"written": args.out, "points": len(rows)}))


def _cmd_analyze(args):
    report = pipeline.analyze()
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps({"written": args.out, "total_params": report["total_params"],
                      "total_macs": report["total_macs"]}))


_COMMANDS = {
    "extract": _cmd_extract,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep-beta": _cmd_sweep,
    "project": _cmd_project,
    "analyze": _cmd_analyze,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except DscanError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
