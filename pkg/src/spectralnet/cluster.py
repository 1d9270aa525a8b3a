"""k-means, nearest-centroid assignment and clustering scores (ACC, NMI)."""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, LengthMismatch, TooFewPoints
from .nn import Mlp, forward

log = logging.getLogger(__name__)


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_trace: List[float]
    n_reseeds: int


def nearest(points, centroids):
    """Index of the closest centroid per row; ties go to the lower index."""
    return np.argmin(cdist(points, centroids, "sqeuclidean"), axis=1)


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iter):
    k = centers.shape[0]
    labels = nearest(x, centers)
    trace = []
    reseeds = 0
    it = 0
    for it in range(1, max_iter + 1):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
        d2 = np.sum((x - centers[labels]) ** 2, axis=1)
        for c in range(k):
            if not np.any(labels == c):
                far = int(np.argmax(d2))
                log.warning("k-means: cluster %d emptied; reseeding at point %d", c, far)
                centers[c] = x[far]
                labels[far] = c
                d2[far] = 0.0
                reseeds += 1
        trace.append(float(np.sum((x - centers[labels]) ** 2)))
        new = nearest(x, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    inertia = float(np.sum((x - centers[labels]) ** 2))
    return centers, labels, inertia, it, trace, reseeds


def kmeans(points, k, restarts=10, seed=0, max_iter=300):
    """Lloyd's algorithm from ``restarts`` k-means++ starts; keeps the lowest inertia.

    The returned labels are the nearest-centroid assignment of the returned
    centroids, so ``nearest(points, centroids)`` reproduces them exactly.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch("points must be 2-D")
    if x.shape[0] < k:
        raise TooFewPoints(f"k-means with k={k} needs at least {k} points, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers, labels, inertia, n_iter, trace, reseeds = _lloyd(x, _kmeanspp(x, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centers, labels, inertia, n_iter, trace, reseeds)
    return best


@dataclass
class ClusterModel:
    spectral_map: Mlp
    centroids: np.ndarray

    @property
    def k(self):
        return self.centroids.shape[0]


def embed(model, points):
    """Rows ``F(x_i)`` of the trained map, frozen output layer included."""
    return forward(model, points)[0]


def assign(model, points):
    """Out-of-sample labels: embed, then nearest centroid."""
    y = embed(model.spectral_map, points)
    if y.shape[1] != model.centroids.shape[1]:
        raise DimensionMismatch("embedding width does not match centroids")
    return nearest(y, model.centroids)


def _check_lengths(truth, pred):
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise LengthMismatch(f"{truth.size} true labels vs {pred.size} predictions")
    return truth, pred


def contingency(truth, pred):
    truth, pred = _check_lengths(truth, pred)
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((ti.max(initial=-1) + 1, pi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def acc(truth, pred):
    """Best-permutation accuracy, solved with the Hungarian method."""
    table = contingency(truth, pred)
    if table.size == 0:
        return 1.0
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def mutual_information(truth, pred):
    table = contingency(truth, pred).astype(np.float64)
    n = table.sum()
    if n == 0:
        return 0.0
    pxy = table / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))


def entropy(labels):
    _, counts = np.unique(np.asarray(labels).ravel(), return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(truth, pred):
    """``I(l; c) / max(H(l), H(c))`` with natural logs; 1.0 when both are single clusters."""
    truth, pred = _check_lengths(truth, pred)
    denom = max(entropy(truth), entropy(pred))
    if denom == 0.0:
        return 1.0
    return float(min(max(mutual_information(truth, pred) / denom, 0.0), 1.0))
