"""Training procedure: reconstruction pretraining, K-means center
initialization, then joint optimization of the autoencoder weights and
cluster centers under L_r + beta * L_c.

An "iteration" is one mini-batch update. Every ``target_update_interval``
joint updates the soft assignments Q, the target distribution P and the
hard labels are recomputed over the full dataset; training stops when the
fraction of clips whose hard label changed since the previous refresh
drops below ``epsilon``, or at ``max_iters``.

History rows are {iter, L_r, L_c, L_J, label_change_fraction}: losses are
means over the batches since the previous row, L_c is scaled per clip (the
KL sum divided by batch size, so beta weighs it against the per-clip
reconstruction loss), and label_change_fraction is null during pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    ClusterState,
    clustering_loss,
    joint_loss,
    kmeans,
    reconstruction_loss,
    soft_assign,
)
from .errors import ConfigurationError, InputError, TrainingDivergedError
from .optim import Adam
from .tensor import Tensor, backward

# named randomness sub-streams, all derived from one seed
STREAM_INIT = 0
STREAM_KMEANS = 1
STREAM_BATCH = 2


def stream_rng(seed, stream):
    """Generator for one named sub-stream of the run seed."""
    return np.random.default_rng([int(seed), int(stream)])


@dataclass
class TrainingConfig:
    beta: float = 0.3
    lr: float = 0.001
    batch_size: int = 32
    pretrain_iters: int = 200
    max_iters: int = 4000
    epsilon: float = 0.05
    target_update_interval: int = 100
    k: int = 9
    alpha: float = 1.0
    kmeans_restarts: int = 10
    seed: int = 0

    def validate(self):
        if self.beta < 0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in (0,1), got {self.epsilon}")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        for name in ("batch_size", "target_update_interval", "k", "kmeans_restarts"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("pretrain_iters", "max_iters"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        return self


@dataclass
class TrainResult:
    model: object
    state: ClusterState
    history: list = field(default_factory=list)
    stopped_early: bool = False
    iterations_run: int = 0
    init_state: ClusterState = None  # right after K-means center initialization


class _BatchSampler:
    """Deterministic shuffled epochs; ragged remainders trigger a reshuffle."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self):
        if self._pos + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        batch = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


class _LossWindow:
    def __init__(self):
        self.reset()

    def add(self, l_r, l_c):
        self.sum_r += l_r
        self.sum_c += l_c
        self.count += 1

    def reset(self):
        self.sum_r, self.sum_c, self.count = 0.0, 0.0, 0

    def means(self):
        n = max(self.count, 1)
        return self.sum_r / n, self.sum_c / n


def _as_batch_array(features):
    features = np.asarray(features, dtype=np.float32)
    if features.ndim == 3:
        features = features[..., None]
    if features.ndim != 4 or features.shape[0] == 0:
        raise InputError(
            f"features must be a non-empty (N,H,W) or (N,H,W,1) array, got {features.shape}")
    return features


def _check_finite(value, iteration, phase, parts):
    if not np.isfinite(value):
        detail = ", ".join(f"{k}={v:.6g}" for k, v in parts.items())
        raise TrainingDivergedError(
            f"non-finite loss at {phase} iteration {iteration} ({detail})")


def train(model, features, config):
    """Run the full optimization; returns TrainResult(model, state, history)."""
    config.validate()
    x_all = _as_batch_array(features)
    n = x_all.shape[0]
    if n < config.k:
        raise InputError(f"need at least k={config.k} clips, got {n}")

    sampler = _BatchSampler(n, config.batch_size, stream_rng(config.seed, STREAM_BATCH))
    history = []
    window = _LossWindow()
    interval = config.target_update_interval

    # phase 1: pretrain the autoencoder on reconstruction only (beta = 0)
    optimizer = Adam(model.parameters(), lr=config.lr)
    for it in range(1, config.pretrain_iters + 1):
        idx = sampler.next()
        x = Tensor(x_all[idx])
        _, x_rec = model.forward(x, train=True)
        loss = reconstruction_loss(x, x_rec)
        l_r = loss.item()
        _check_finite(l_r, it, "pretrain", {"L_r": l_r})
        backward(loss)
        optimizer.step()
        optimizer.zero_grad()
        window.add(l_r, 0.0)
        if it % interval == 0 or it == config.pretrain_iters:
            mean_r, _ = window.means()
            history.append({"iter": it, "L_r": mean_r, "L_c": 0.0, "L_J": mean_r,
                            "label_change_fraction": None})
            window.reset()

    # phase 2: initialize cluster centers with K-means on all embeddings
    z_all = model.embed_all(x_all, batch_size=config.batch_size)
    km = kmeans(z_all, config.k, restarts=config.kmeans_restarts,
                rng=stream_rng(config.seed, STREAM_KMEANS))
    centers = Tensor(km.centers.astype(np.float32), requires_grad=True)
    state = ClusterState.from_embeddings(z_all, centers.data, alpha=config.alpha)
    init_state = state
    labels_prev = state.hard_labels

    # phase 3: joint updates of autoencoder weights and centers
    optimizer = Adam(model.parameters() + [centers], lr=config.lr)
    p_full = state.p
    stopped = False
    iterations = 0
    for it in range(1, config.max_iters + 1):
        iterations = it
        idx = sampler.next()
        x = Tensor(x_all[idx])
        z, x_rec = model.forward(x, train=True)
        l_r = reconstruction_loss(x, x_rec)
        q = soft_assign(z, centers, alpha=config.alpha)
        l_c = clustering_loss(p_full[idx], q) * (1.0 / len(idx))
        loss = joint_loss(l_r, l_c, config.beta)
        loss_val, l_r_val, l_c_val = loss.item(), l_r.item(), l_c.item()
        _check_finite(loss_val, it, "joint", {"L_r": l_r_val, "L_c": l_c_val})
        backward(loss)
        optimizer.step()
        optimizer.zero_grad()
        window.add(l_r_val, l_c_val)

        if it % interval == 0:
            z_all = model.embed_all(x_all, batch_size=config.batch_size)
            state = ClusterState.from_embeddings(z_all, centers.data, alpha=config.alpha)
            p_full = state.p
            changed = float(np.mean(state.hard_labels != labels_prev))
            labels_prev = state.hard_labels
            mean_r, mean_c = window.means()
            history.append({"iter": config.pretrain_iters + it, "L_r": mean_r,
                            "L_c": mean_c, "L_J": mean_r + config.beta * mean_c,
                            "label_change_fraction": changed})
            window.reset()
            if changed < config.epsilon:
                stopped = True
                break

    if not stopped and config.max_iters > 0 and iterations % interval != 0:
        # final refresh so the returned state reflects the trained model
        z_all = model.embed_all(x_all, batch_size=config.batch_size)
        state = ClusterState.from_embeddings(z_all, centers.data, alpha=config.alpha)

    return TrainResult(model=model, state=state, history=history,
                       stopped_early=stopped, iterations_run=iterations,
                       init_state=init_state)
