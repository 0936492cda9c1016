"""Run configuration: training hyperparameters plus frontend settings.

Config files are flat ``key=value`` lines ('#' starts a comment); every key
can also be overridden by a CLI flag of the same name. The defaults are the
evaluation settings: lr 0.001, batch 32, pretrain 200, max 4000, epsilon
0.05, K=9, beta 0.3, 128 mel bands at 128ms/64ms framing.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigurationError, InputError
from .train import TrainingConfig


@dataclass
class RunConfig:
    # training
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
    # frontend
    sample_rate: int = 16000
    frame_ms: float = 128.0
    hop_ms: float = 64.0
    n_mels: int = 128
    target_frames: int = 156

    def validate(self):
        self.training().validate()
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.frame_ms <= 0 or self.hop_ms <= 0:
            raise ConfigurationError("frame_ms and hop_ms must be positive")
        if self.n_mels < 1 or self.target_frames < 1:
            raise ConfigurationError("n_mels and target_frames must be >= 1")
        return self

    def training(self):
        return TrainingConfig(beta=self.beta, lr=self.lr, batch_size=self.batch_size,
                              pretrain_iters=self.pretrain_iters, max_iters=self.max_iters,
                              epsilon=self.epsilon,
                              target_update_interval=self.target_update_interval,
                              k=self.k, alpha=self.alpha,
                              kmeans_restarts=self.kmeans_restarts, seed=self.seed)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"config key {key}={raw!r}: {exc}") from exc
    return raw


def parse_config_file(path):
    """Flat key=value lines to a dict of typed overrides."""
    overrides = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise InputError(f"{path}:{line_no}: expected key=value, got {text!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ConfigurationError(f"{path}:{line_no}: unknown config key {key!r}")
            overrides[key] = _coerce(key, raw)
    return overrides


def load_config(path=None, overrides=None):
    """Defaults, then config-file values, then explicit overrides."""
    values = {}
    if path is not None:
        values.update(parse_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return RunConfig(**values).validate()
