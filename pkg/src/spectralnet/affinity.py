"""Nearest-neighbor Gaussian affinities.

``W_ij = exp(-dist(i, j)^2 / (2 sigma^2))`` when ``j`` is among the
``n_neighbors`` nearest neighbors of ``i``, zero otherwise, then symmetrized
as ``(W + W^T) / 2``. Distances are Euclidean either in input space or in the
embedding space of a trained Siamese network.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels
from .errors import DegenerateScale, DimensionMismatch, TooFewPoints
from .nn import forward

SCALE_MODES = ("per-point-median-NN", "global-median-kth", "fixed")
DISTANCES = ("euclidean", "siamese")


@dataclass(frozen=True)
class AffinityConfig:
    n_neighbors: int = 10
    scale_mode: str = "global-median-kth"
    scale_k: int = 3
    fixed_sigma: Optional[float] = None
    distance: str = "euclidean"

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}")
        if self.scale_k < 1:
            raise ValueError("scale_k must be >= 1")
        if self.scale_mode == "fixed" and not (self.fixed_sigma and self.fixed_sigma > 0):
            raise ValueError("fixed scale mode needs fixed_sigma > 0")
        if self.distance not in DISTANCES:
            raise ValueError(f"distance must be one of {DISTANCES}")


class AffinityBatch(NamedTuple):
    w: np.ndarray
    degrees: np.ndarray

    @property
    def laplacian(self):
        return np.diag(self.degrees) - self.w


def embed_points(points, siamese=None):
    """Coordinates in which Euclidean distance is measured."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionMismatch(f"points must be 2-D, got shape {points.shape}")
    if siamese is None:
        return points
    return forward(siamese, points)[0]


def sq_distances(points):
    return cdist(points, points, "sqeuclidean")


def knn(points, k, metric=None):
    """Indices of the ``k`` nearest neighbors of every point (self excluded).

    ``metric`` is None for Euclidean distance or a Siamese ``Mlp`` whose
    embedding distance is used instead. Ties go to the lower index.
    """
    z = embed_points(points, metric)
    m = z.shape[0]
    if not 1 <= k < m:
        raise TooFewPoints(f"need more than k={k} points, got {m}")
    return _kernels.knn_select(sq_distances(z), int(k))


def _neighbor_distances(d2, k):
    idx = _kernels.knn_select(d2, k)
    return idx, np.sqrt(np.take_along_axis(d2, idx, axis=1))


def select_scale(points, cfg, siamese=None, _dists=None):
    """Gaussian scale sigma for ``points`` under ``cfg``.

    per-point-median-NN: median distance to the nearest neighbor.
    global-median-kth: median distance to the ``scale_k``-th neighbor.
    fixed: ``cfg.fixed_sigma``.
    """
    if cfg.scale_mode == "fixed":
        return float(cfg.fixed_sigma)
    kth = 1 if cfg.scale_mode == "per-point-median-NN" else cfg.scale_k
    if _dists is None:
        z = embed_points(points, siamese)
        if z.shape[0] < kth + 1:
            raise TooFewPoints(f"scale needs at least {kth + 1} points, got {z.shape[0]}")
        _, _dists = _neighbor_distances(sq_distances(z), kth)
    sigma = float(np.median(_dists[:, kth - 1]))
    if not sigma > 0:
        raise DegenerateScale("median neighbor distance is zero (coincident points)")
    return sigma


def apply_label_override(w, labels):
    """Set affinities between labeled points: 1 for equal labels, 0 otherwise.

    ``labels`` uses -1 (any negative value) for unlabeled points. The
    diagonal stays zero; applying the override twice changes nothing.
    """
    labels = np.asarray(labels)
    known = np.flatnonzero(labels >= 0)
    if known.size:
        lk = labels[known]
        block = (lk[:, None] == lk[None, :]).astype(np.float64)
        w[np.ix_(known, known)] = block
        w[known, known] = 0.0
    return w


def gaussian_affinity(points, cfg, labels=None, siamese=None, sigma=None):
    """Build the symmetric kNN Gaussian affinity batch for ``points``.

    ``siamese`` must be given when ``cfg.distance == "siamese"``. ``sigma``
    overrides the scale computed from ``cfg``.
    """
    if cfg.distance == "siamese" and siamese is None:
        raise ValueError("siamese distance requested but no Siamese model given")
    z = embed_points(points, siamese if cfg.distance == "siamese" else None)
    m = z.shape[0]
    kth = 0 if cfg.scale_mode == "fixed" else (1 if cfg.scale_mode == "per-point-median-NN" else cfg.scale_k)
    kmax = max(cfg.n_neighbors, kth)
    if kmax >= m:
        raise TooFewPoints(f"need more than {kmax} points, got {m}")
    d2 = sq_distances(z)
    idx, dists = _neighbor_distances(d2, kmax)
    if sigma is None:
        sigma = select_scale(z, cfg, _dists=dists)

    nn_idx = idx[:, : cfg.n_neighbors]
    rows = np.repeat(np.arange(m), cfg.n_neighbors)
    cols = nn_idx.ravel()
    w = np.zeros((m, m))
    w[rows, cols] = np.exp(-d2[rows, cols] / (2.0 * sigma * sigma))
    w = 0.5 * (w + w.T)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (m,):
            raise DimensionMismatch(f"labels must have length {m}")
        apply_label_override(w, labels)
    np.fill_diagonal(w, 0.0)
    return AffinityBatch(w, w.sum(axis=1))


def siamese_distance(model, x_i, x_j):
    """Euclidean distance between the Siamese embeddings of two points."""
    x = np.vstack([np.atleast_2d(x_i), np.atleast_2d(x_j)])
    z = forward(model, x)[0]
    return float(np.linalg.norm(z[0] - z[1]))
