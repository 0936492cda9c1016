"""2-D PCA projection of embeddings for cluster visualization exports."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import InputError


def project_2d(embeddings):
    """First two principal components, (N,2).

    Sign convention: each component's largest-magnitude loading is positive.
    Rank-deficient all-identical input maps every point to the origin (with
    a warning).
    """
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InputError(f"project_2d needs at least 2 embeddings, got shape {z.shape}")
    if np.all(z == z[0]):
        warnings.warn("all embeddings identical; projecting every point to the origin")
        return np.zeros((z.shape[0], 2))
    centered = z - z.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    n_comp = min(2, vt.shape[0])
    components = vt[:n_comp]
    for i in range(n_comp):
        j = np.argmax(np.abs(components[i]))
        if components[i, j] < 0:
            components[i] = -components[i]
    coords = centered @ components.T
    if n_comp < 2:
        coords = np.hstack([coords, np.zeros((z.shape[0], 1))])
    return coords
