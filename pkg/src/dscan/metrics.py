"""Clustering-quality metrics: NMI and clustering accuracy.

Both scores compare a predicted cluster labeling against ground-truth
classes through the contingency table of joint counts. Labels are opaque;
they are re-indexed densely before counting. Natural log throughout (the
base cancels in the NMI ratio).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError


@dataclass
class ContingencyTable:
    """Joint counts n_ij of (cluster i, class j) plus their marginals."""

    counts: np.ndarray                      # (N_c, N_g) integer counts
    cluster_sums: np.ndarray                # n_i = sum_j n_ij
    class_sums: np.ndarray                  # n_j = sum_i n_ij
    total: int                              # N_s = sum_ij n_ij
    cluster_values: list = field(default_factory=list)
    class_values: list = field(default_factory=list)

    @classmethod
    def from_labels(cls, pred, true):
        pred = np.asarray(pred)
        true = np.asarray(true)
        if pred.shape != true.shape or pred.ndim != 1:
            raise InputError(
                f"label vectors must be 1-D and equal length, got {pred.shape} and {true.shape}")
        if len(pred) == 0:
            raise InputError("label vectors must be non-empty")
        cluster_values, pred_idx = np.unique(pred, return_inverse=True)
        class_values, true_idx = np.unique(true, return_inverse=True)
        counts = np.zeros((len(cluster_values), len(class_values)), dtype=np.int64)
        np.add.at(counts, (pred_idx, true_idx), 1)
        return cls(counts=counts,
                   cluster_sums=counts.sum(axis=1),
                   class_sums=counts.sum(axis=0),
                   total=int(counts.sum()),
                   cluster_values=cluster_values.tolist(),
                   class_values=class_values.tolist())


def nmi(pred_labels, true_labels):
    """Normalized mutual information in [0, 1]; 1 iff the partitions agree."""
    table = ContingencyTable.from_labels(pred_labels, true_labels)
    return nmi_from_counts(table.counts)


def nmi_from_counts(counts):
    counts = np.asarray(counts, dtype=np.float64)
    n_i = counts.sum(axis=1)
    n_j = counts.sum(axis=0)
    total = counts.sum()
    if total <= 0:
        raise InputError("contingency table has no mass")
    nz = counts > 0
    ratio = np.zeros_like(counts)
    ratio[nz] = total * counts[nz] / np.outer(n_i, n_j)[nz]
    numerator = float((counts[nz] * np.log(ratio[nz])).sum())
    f_clusters = float(sum(v * np.log(v / total) for v in n_i if v > 0))
    f_classes = float(sum(v * np.log(v / total) for v in n_j if v > 0))
    denominator = np.sqrt(f_clusters * f_classes)
    if denominator == 0.0:
        # one side is a single cluster: mutual information is 0 by convention
        return 0.0
    return float(np.clip(numerator / denominator, 0.0, 1.0))


def hungarian_assign(cost):
    """Permutation sigma minimizing sum_i cost[i, sigma(i)] on a square matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InputError(f"hungarian_assign requires a square matrix, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise InputError("hungarian_assign requires finite costs")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def _best_mapping(counts):
    """Optimal cluster -> class assignment on a (possibly padded) count table."""
    n_c, n_g = counts.shape
    k = max(n_c, n_g)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[:n_c, :n_g] = counts
    perm = hungarian_assign(padded.max() - padded)
    matched = int(padded[np.arange(k), perm].sum())
    return perm, matched


def clustering_accuracy(pred_labels, true_labels):
    """Accuracy under the best cluster-to-class mapping, in [0, 1]."""
    table = ContingencyTable.from_labels(pred_labels, true_labels)
    _, matched = _best_mapping(table.counts)
    return matched / table.total


def metrics_report(pred_labels, true_labels):
    """Both scores plus the contingency table and the optimal mapping."""
    table = ContingencyTable.from_labels(pred_labels, true_labels)
    perm, matched = _best_mapping(table.counts)
    mapping = {}
    for i, cluster in enumerate(table.cluster_values):
        j = perm[i]
        if j < len(table.class_values):
            mapping[str(cluster)] = str(table.class_values[j])
    return {
        "nmi": nmi_from_counts(table.counts),
        "ca": matched / table.total,
        "n_clips": table.total,
        "contingency_table": table.counts.tolist(),
        "cluster_values": [str(v) for v in table.cluster_values],
        "class_values": [str(v) for v in table.class_values],
        "mapping": mapping,
    }
