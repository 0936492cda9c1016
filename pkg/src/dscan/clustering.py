"""Clustering layer: student-t soft assignment, target distribution, losses, K-means.

``soft_assign`` and the losses accept either plain numpy arrays (float64,
used for full-dataset bookkeeping) or ``Tensor`` objects (differentiable,
used inside training steps); both run the same formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateClusterError,
    DimensionError,
    InfiniteDivergenceError,
    InputError,
)
from .ops import pairwise_sqdist
from .tensor import Tensor


def soft_assign(z, centers, alpha=1.0):
    """Student-t similarity of each embedding to each center, row-normalized.

    q_ij = (1 + ||z_i - u_j||^2 / alpha)^(-(alpha+1)/2), normalized over j.
    """
    if isinstance(z, Tensor) or isinstance(centers, Tensor):
        z = z if isinstance(z, Tensor) else Tensor(z)
        centers = centers if isinstance(centers, Tensor) else Tensor(centers)
        if centers.shape[0] < 1:
            raise ConfigurationError("soft_assign requires at least one cluster center")
        d = pairwise_sqdist(z, centers)
        kernel = (d * (1.0 / alpha) + 1.0) ** (-(alpha + 1.0) / 2.0)
        return kernel / kernel.sum(axis=1, keepdims=True)
    z = np.asarray(z, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 1:
        raise ConfigurationError(
            f"soft_assign requires a (K>=1, D) center matrix, got {centers.shape}")
    if z.ndim != 2 or z.shape[1] != centers.shape[1]:
        raise DimensionError(
            f"soft_assign: embeddings {z.shape} incompatible with centers {centers.shape}")
    if not (np.isfinite(z).all() and np.isfinite(centers).all()):
        raise InputError("soft_assign requires finite embeddings and centers")
    diff = z[:, None, :] - centers[None, :, :]
    d = np.einsum("nkd,nkd->nk", diff, diff)
    kernel = (1.0 + d / alpha) ** (-(alpha + 1.0) / 2.0)
    return kernel / kernel.sum(axis=1, keepdims=True)


def target_distribution(q):
    """Sharpened, frequency-normalized self-training target.

    p_ij = (q_ij^2 / f_j) / sum_j'(q_ij'^2 / f_j') with f_j the soft cluster
    frequency sum_i q_ij.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise DimensionError(f"target_distribution expects an (N,K) matrix, got {q.shape}")
    freq = q.sum(axis=0)
    if np.any(freq == 0.0):
        empty = np.nonzero(freq == 0.0)[0].tolist()
        raise DegenerateClusterError(f"clusters with zero soft-assignment mass: {empty}")
    weight = (q * q) / freq
    return weight / weight.sum(axis=1, keepdims=True)


def reconstruction_loss(x, x_rec):
    """Mean over clips of the squared L2 norm of the reconstruction residual."""
    if isinstance(x, Tensor) or isinstance(x_rec, Tensor):
        x = x if isinstance(x, Tensor) else Tensor(x)
        x_rec = x_rec if isinstance(x_rec, Tensor) else Tensor(x_rec)
        if tuple(x.shape) != tuple(x_rec.shape):
            raise DimensionError(
                f"reconstruction_loss: shapes {tuple(x.shape)} vs {tuple(x_rec.shape)}")
        diff = x_rec - x
        return (diff * diff).sum() * (1.0 / x.shape[0])
    x = np.asarray(x, dtype=np.float64)
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if x.shape != x_rec.shape:
        raise DimensionError(
            f"reconstruction_loss: shapes {x.shape} vs {x_rec.shape}")
    diff = x_rec - x
    return float((diff * diff).sum() / x.shape[0])


def clustering_loss(p, q):
    """KL divergence sum_ij p_ij log(p_ij / q_ij), with 0 log 0 = 0.

    ``p`` is always treated as a constant target; gradients flow through
    ``q`` only.
    """
    p_arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    q_arr = q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    if p_arr.shape != q_arr.shape:
        raise DimensionError(f"clustering_loss: shapes {p_arr.shape} vs {q_arr.shape}")
    if np.any((q_arr <= 0.0) & (p_arr > 0.0)):
        raise InfiniteDivergenceError("q == 0 at a position where p > 0")
    if isinstance(q, Tensor):
        mask = p_arr > 0.0
        p_log_p = float(np.sum(p_arr[mask] * np.log(p_arr[mask])))
        return p_log_p - (Tensor(p_arr.astype(q.data.dtype)) * q.log()).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p_arr > 0.0, p_arr * (np.log(p_arr) - np.log(q_arr)), 0.0)
    return float(terms.sum())


def joint_loss(l_r, l_c, beta):
    """L_r + beta * L_c (the pretraining objective when beta == 0)."""
    if beta < 0:
        raise ConfigurationError(f"beta must be >= 0, got {beta}")
    return l_r + beta * l_c


@dataclass
class ClusterState:
    """Cluster centers plus the distributions derived from a set of embeddings."""

    centers: np.ndarray        # (K, D)
    q: np.ndarray              # (N, K) soft assignments
    p: np.ndarray              # (N, K) target distribution
    hard_labels: np.ndarray    # (N,) argmax_j q_ij
    alpha: float = 1.0

    @classmethod
    def from_embeddings(cls, z, centers, alpha=1.0):
        q = soft_assign(z, centers, alpha=alpha)
        p = target_distribution(q)
        return cls(centers=np.asarray(centers, dtype=np.float64), q=q, p=p,
                   hard_labels=q.argmax(axis=1), alpha=alpha)

    def validate(self, tol=1e-6):
        assert np.allclose(self.q.sum(axis=1), 1.0, atol=tol)
        assert np.allclose(self.p.sum(axis=1), 1.0, atol=tol)
        assert np.all((self.q > 0.0) & (self.q < 1.0 + tol))
        assert np.array_equal(self.hard_labels, self.q.argmax(axis=1))
        return True


# ---------------------------------------------------------------------------
# K-means


def _kmeans_plus_plus(z, k, rng):
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]), dtype=z.dtype)
    centers[0] = z[rng.integers(n)]
    closest = np.full(n, np.inf)
    for i in range(1, k):
        dist = ((z - centers[i - 1]) ** 2).sum(axis=1)
        np.minimum(closest, dist, out=closest)
        total = closest.sum()
        if total == 0.0:
            centers[i] = z[rng.integers(n)]
        else:
            centers[i] = z[rng.choice(n, p=closest / total)]
    return centers


def _lloyd(z, centers, max_iter, history=None):
    labels = None
    for _ in range(max_iter):
        d = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d.argmin(axis=1)
        if history is not None:
            history.append(float(d[np.arange(len(z)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = z[members].mean(axis=0)
            else:
                # re-seed an empty cluster to the point farthest from its center
                farthest = d[np.arange(len(z)), labels].argmax()
                centers[j] = z[farthest]
                labels = None  # force another assignment pass
                break
    d = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(z)), labels].sum())
    return centers, labels, inertia


class KMeansResult(NamedTuple):
    centers: np.ndarray
    labels: np.ndarray
    inertia: float


def kmeans(z, k, restarts=10, seed=None, rng=None, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` by WCSS."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise DimensionError(f"kmeans expects an (N,D) matrix, got {z.shape}")
    if k < 1:
        raise ConfigurationError(f"kmeans requires k >= 1, got {k}")
    if z.shape[0] < k:
        raise InputError(f"kmeans requires at least k={k} points, got {z.shape[0]}")
    if rng is None:
        rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        centers = _kmeans_plus_plus(z, k, rng)
        centers, labels, inertia = _lloyd(z, centers.copy(), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centers, labels, inertia)
    return best
