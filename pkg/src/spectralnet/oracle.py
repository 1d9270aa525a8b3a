"""Exact spectral clustering by dense eigendecomposition of ``D - W``.

This is the ground truth the trained network is checked against.
"""

from typing import NamedTuple

import numpy as np

from .affinity import gaussian_affinity
from .cluster import kmeans
from .linalg import grassmann_sq, sym_eigen
from .trainer import embed


class SpectralSolution(NamedTuple):
    labels: np.ndarray
    vectors: np.ndarray  # n x k, eigenvectors of the k smallest eigenvalues
    values: np.ndarray  # the k smallest eigenvalues


def laplacian_eigs(points, affinity_cfg, method="auto"):
    w = gaussian_affinity(points, affinity_cfg)
    return sym_eigen(w.laplacian, method=method)


def exact_spectral_clustering(points, k, affinity_cfg, seed=0, method="auto", restarts=10):
    """Full-graph affinity, bottom-k Laplacian eigenvectors, then k-means."""
    eig = laplacian_eigs(points, affinity_cfg, method)
    vectors = eig.vectors[:, :k]
    labels = kmeans(vectors, k, restarts=restarts, seed=seed).labels
    return SpectralSolution(labels, vectors, eig.values[:k])


def grassmann_vs_oracle(model, points, k, affinity_cfg, method="auto", vectors=None):
    """Squared Grassmann distance between the network embedding of
    ``points`` and the bottom-k Laplacian eigenvectors of the same points."""
    if vectors is None:
        vectors = laplacian_eigs(points, affinity_cfg, method).vectors[:, :k]
    return grassmann_sq(embed(model, points), vectors)
