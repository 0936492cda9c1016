"""Deep clustering of audio clips with a depthwise-separable convolutional autoencoder."""

from .tensor import Tensor, Tape, backward, no_grad
from .ops import (
    BatchNormState,
    batch_norm,
    conv2d,
    depthwise_conv2d,
    fully_connected,
    pairwise_sqdist,
    pointwise_conv2d,
    relu,
    transposed_conv2d,
)
from .optim import Adam, adam_step
from .audio import AudioClip, LogMelFeature, clip_to_logmel
from .clustering import (
    ClusterState,
    clustering_loss,
    joint_loss,
    kmeans,
    reconstruction_loss,
    soft_assign,
    target_distribution,
)
from .complexity import ArchitectureSpec, ComplexityReport, LayerSpec, analyze_complexity
from .metrics import ContingencyTable, clustering_accuracy, hungarian_assign, nmi
from .model import DscanAutoencoder, architecture_spec
from .projection import project_2d
from .storage import FeatureStore, read_manifest, write_manifest
from .train import TrainingConfig, TrainResult, train
from .config import RunConfig, load_config

__all__ = [
    "Tensor", "Tape", "backward", "no_grad",
    "BatchNormState", "batch_norm", "conv2d", "depthwise_conv2d",
    "fully_connected", "pairwise_sqdist", "pointwise_conv2d", "relu",
    "transposed_conv2d", "Adam", "adam_step",
    "AudioClip", "LogMelFeature", "clip_to_logmel",
    "ClusterState", "clustering_loss", "joint_loss", "kmeans",
    "reconstruction_loss", "soft_assign", "target_distribution",
    "ArchitectureSpec", "ComplexityReport", "LayerSpec", "analyze_complexity",
    "ContingencyTable", "clustering_accuracy", "hungarian_assign", "nmi",
    "DscanAutoencoder", "architecture_spec", "project_2d",
    "FeatureStore", "read_manifest", "write_manifest",
    "TrainingConfig", "TrainResult", "train",
    "RunConfig", "load_config",
]
