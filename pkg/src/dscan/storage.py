"""File formats: binary tensor store, checkpoints, CSV manifests.

Tensor store ("DSTF1"): magic, u32 record count, then per record a u16
id-length + UTF-8 id, u8 ndims, u32 dims, and the payload as little-endian
float32, row-major. The checkpoint ("DSCKPT1") is the architecture
description as a length-prefixed JSON block followed by a tensor store
stream whose record ids are parameter names.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError

STORE_MAGIC = b"DSTF1"
CHECKPOINT_MAGIC = b"DSCKPT1"
FEATURE_SHAPE = (128, 156)


def write_tensor_records(fh, records):
    """Write a DSTF1 stream of (record_id, float32 array) to a binary file."""
    records = list(records)
    fh.write(STORE_MAGIC)
    fh.write(struct.pack("<I", len(records)))
    for record_id, array in records:
        encoded = str(record_id).encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InputError(f"record id too long: {record_id[:40]}...")
        array = np.ascontiguousarray(array, dtype="<f4")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", array.ndim))
        for dim in array.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(array.tobytes())


def read_tensor_records(fh):
    magic = fh.read(len(STORE_MAGIC))
    if magic != STORE_MAGIC:
        raise InputError(f"bad tensor-store magic: {magic!r}")
    (count,) = struct.unpack("<I", fh.read(4))
    records = []
    seen = set()
    for _ in range(count):
        (id_len,) = struct.unpack("<H", fh.read(2))
        record_id = fh.read(id_len).decode("utf-8")
        if record_id in seen:
            raise InputError(f"duplicate record id {record_id!r}")
        seen.add(record_id)
        (ndim,) = struct.unpack("<B", fh.read(1))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        n_bytes = 4 * int(np.prod(shape)) if ndim else 4
        payload = fh.read(n_bytes)
        if len(payload) != n_bytes:
            raise InputError(f"truncated payload for record {record_id!r}")
        array = np.frombuffer(payload, dtype="<f4").reshape(shape)
        records.append((record_id, array))
    return records


@dataclass
class FeatureStore:
    """In-memory view of a feature file: unique clip ids, (N,128,156) matrix."""

    clip_ids: list
    features: np.ndarray

    def __post_init__(self):
        if len(self.clip_ids) != len(set(self.clip_ids)):
            raise InputError("feature store has duplicate clip ids")
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 3 or self.features.shape[1:] != FEATURE_SHAPE:
            raise InputError(
                f"feature store must hold (N,{FEATURE_SHAPE[0]},{FEATURE_SHAPE[1]}) features, "
                f"got {self.features.shape}")

    def __len__(self):
        return len(self.clip_ids)

    def save(self, path):
        with open(path, "wb") as fh:
            write_tensor_records(fh, zip(self.clip_ids, self.features))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            records = read_tensor_records(fh)
        if not records:
            raise InputError(f"feature store {path} is empty")
        for record_id, array in records:
            if array.shape != FEATURE_SHAPE:
                raise InputError(
                    f"record {record_id!r} has shape {array.shape}, expected {FEATURE_SHAPE}")
        return cls(clip_ids=[r[0] for r in records],
                   features=np.stack([r[1] for r in records]))


def write_checkpoint(path, architecture, arrays):
    """DSCKPT1 container: JSON architecture block + named parameter tensors."""
    blob = json.dumps(architecture, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        write_tensor_records(fh, sorted(arrays.items()))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise InputError(f"bad checkpoint magic: {magic!r}")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        architecture = json.loads(fh.read(blob_len).decode("utf-8"))
        records = read_tensor_records(fh)
    return architecture, dict(records)


# ---------------------------------------------------------------------------
# manifests


@dataclass
class ManifestRow:
    clip_id: str
    wav_path: str
    label: str | None = None


def read_manifest(path):
    """CSV with header clip_id,wav_path,label; empty label = unlabeled."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"clip_id", "wav_path", "label"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(
                f"manifest {path} must have header clip_id,wav_path,label, "
                f"got {reader.fieldnames}")
        for record in reader:
            label = (record["label"] or "").strip()
            rows.append(ManifestRow(clip_id=record["clip_id"].strip(),
                                    wav_path=record["wav_path"].strip(),
                                    label=label if label else None))
    if not rows:
        raise InputError(f"manifest {path} has no rows")
    ids = [r.clip_id for r in rows]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise InputError(f"manifest has duplicate clip ids: {dupes[:5]}")
    return rows


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "wav_path", "label"])
        for row in rows:
            writer.writerow([row.clip_id, row.wav_path, row.label or ""])


def write_assignments(path, clip_ids, clusters):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "cluster"])
        for clip_id, cluster in zip(clip_ids, clusters):
            writer.writerow([clip_id, int(cluster)])


def read_assignments(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"clip_id", "cluster"}.issubset(reader.fieldnames):
            raise InputError(f"assignments {path} must have header clip_id,cluster")
        for record in reader:
            out.append((record["clip_id"], int(record["cluster"])))
    ids = [c for c, _ in out]
    if len(ids) != len(set(ids)):
        raise InputError("assignment file repeats clip ids")
    return out
