"""End-to-end commands behind the CLI: extract, train, evaluate, sweep,
project, analyze. Each returns plain data; file writing stays here so the
CLI is a thin argument parser."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .audio import clip_to_logmel, read_wav
from .complexity import analyze_complexity
from .errors import DscanError, InputError
from .metrics import metrics_report
from .model import DscanAutoencoder, architecture_spec
from .projection import project_2d
from .storage import (
    FeatureStore,
    read_assignments,
    read_checkpoint,
    write_assignments,
    write_checkpoint,
)
from .train import STREAM_INIT, stream_rng, train

CHECKPOINT_VERSION = 1
CENTERS_KEY = "clustering.centers"


def extract_features(manifest_rows, config):
    """Log-mel features for every readable clip; returns (store, error list)."""
    clip_ids, features, errors = [], [], []
    for row in manifest_rows:
        try:
            clip = read_wav(row.wav_path, clip_id=row.clip_id)
            feat = clip_to_logmel(clip, frame_ms=config.frame_ms, hop_ms=config.hop_ms,
                                  n_mels=config.n_mels, sample_rate=config.sample_rate,
                                  target_frames=config.target_frames)
            clip_ids.append(row.clip_id)
            features.append(feat.matrix)
        except (DscanError, OSError, ValueError, EOFError) as exc:
            errors.append({"clip_id": row.clip_id, "wav_path": row.wav_path,
                           "error": f"{type(exc).__name__}: {exc}"})
    if not clip_ids:
        raise InputError("no clips could be extracted; every manifest row failed")
    return FeatureStore(clip_ids=clip_ids, features=np.stack(features)), errors


def run_clustering(config, store, out_dir):
    """Full training run; writes assignments CSV, history JSONL, checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = DscanAutoencoder(rng=stream_rng(config.seed, STREAM_INIT))
    result = train(model, store.features, config.training())

    assignments_path = out_dir / "assignments.csv"
    write_assignments(assignments_path, store.clip_ids, result.state.hard_labels)

    history_path = out_dir / "history.jsonl"
    with open(history_path, "w") as fh:
        for row in result.history:
            fh.write(json.dumps(row) + "\n")

    checkpoint_path = out_dir / "checkpoint.dsc"
    arrays = model.state_arrays()
    arrays[CENTERS_KEY] = result.state.centers.astype(np.float32)
    write_checkpoint(checkpoint_path, {
        "version": CHECKPOINT_VERSION,
        "architecture": architecture_spec().to_json_dict(),
        "k": config.k,
        "alpha": config.alpha,
        "seed": config.seed,
    }, arrays)

    return result, {"assignments": assignments_path, "history": history_path,
                    "checkpoint": checkpoint_path}


def load_checkpoint_model(path):
    """Rebuild the model (and centers, if stored) from a checkpoint file."""
    meta, arrays = read_checkpoint(path)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {meta.get('version')!r}")
    if meta.get("architecture") != architecture_spec().to_json_dict():
        raise InputError("checkpoint architecture does not match this build")
    model = DscanAutoencoder(seed=0)
    model.load_state_arrays(arrays)
    centers = arrays.get(CENTERS_KEY)
    return model, (None if centers is None else np.asarray(centers, dtype=np.float64)), meta


def evaluate(assignment_rows, manifest_rows):
    """NMI/CA report for an assignment against manifest labels."""
    labels = {row.clip_id: row.label for row in manifest_rows}
    missing = [clip_id for clip_id, _ in assignment_rows
               if labels.get(clip_id) is None]
    if missing:
        raise InputError(
            f"{len(missing)} assigned clips have no label in the manifest: "
            f"{missing[:10]}")
    pred = [cluster for _, cluster in assignment_rows]
    true = [labels[clip_id] for clip_id, _ in assignment_rows]
    return metrics_report(np.asarray(pred), np.asarray(true))


def sweep_beta(config, store, beta_grid, manifest_rows):
    """One full run per beta (same seed); returns rows {beta, nmi, ca, error}."""
    rows = []
    for beta in beta_grid:
        run_config = dataclasses.replace(config, beta=float(beta))
        try:
            model = DscanAutoencoder(rng=stream_rng(run_config.seed, STREAM_INIT))
            result = train(model, store.features, run_config.training())
            report = evaluate(list(zip(store.clip_ids, result.state.hard_labels)),
                              manifest_rows)
            rows.append({"beta": float(beta), "nmi": report["nmi"], "ca": report["ca"],
                         "error": None})
        except DscanError as exc:
            rows.append({"beta": float(beta), "nmi": float("nan"), "ca": float("nan"),
                         "error": f"{type(exc).__name__}: {exc}"})
    return rows


def write_sweep_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("beta,nmi,ca\n")
        for row in rows:
            fh.write(f"{row['beta']},{row['nmi']},{row['ca']}\n")


def project_embeddings(checkpoint_path, store, assignment_rows):
    """(clip_id, x, y, cluster) rows from a trained model's embeddings."""
    model, _, _ = load_checkpoint_model(checkpoint_path)
    clusters = dict(assignment_rows)
    missing = [c for c in store.clip_ids if c not in clusters]
    if missing:
        raise InputError(f"assignments missing for {len(missing)} clips: {missing[:10]}")
    embeddings = model.embed_all(store.features[..., None])
    coords = project_2d(embeddings)
    return [(clip_id, float(x), float(y), int(clusters[clip_id]))
            for clip_id, (x, y) in zip(store.clip_ids, coords)]


def write_projection_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("clip_id,x,y,cluster\n")
        for clip_id, x, y, cluster in rows:
            fh.write(f"{clip_id},{x!r},{y!r},{cluster}\n")


def analyze():
    """Complexity report for the reference architecture."""
    return analyze_complexity(architecture_spec()).to_json_dict()


def load_assignments(path):
    return read_assignments(path)
