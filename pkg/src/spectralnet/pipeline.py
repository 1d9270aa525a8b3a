"""Full fit: optional Siamese metric, spectral map, k-means in embedding space."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bundle import Bundle
from .cluster import ClusterModel, assign, kmeans
from .config import TrainConfig
from .siamese import train_siamese
from .trainer import TrainResult, embed, train_spectralnet

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    bundle: Bundle
    training: TrainResult
    embeddings: np.ndarray
    labels: np.ndarray


def reveal_labels(truth, frac, seed):
    """Keep a seeded random ``frac`` of ``truth``; the rest become -1."""
    truth = np.asarray(truth, dtype=np.int64)
    out = np.full(truth.shape, -1, dtype=np.int64)
    count = int(round(frac * truth.size))
    if count:
        pick = np.random.default_rng(seed).choice(truth.size, size=count, replace=False)
        out[pick] = truth[pick]
    return out


def fit(points, cfg: TrainConfig, truth: Optional[np.ndarray] = None, oracle_vectors=None, callback=None):
    """Train every stage on ``points``; ``truth`` feeds the label override when
    ``cfg.labels_frac > 0``."""
    points = np.asarray(points, dtype=np.float64)
    seed = cfg.spectral.seed
    siamese = None
    if cfg.use_siamese:
        log.info("training Siamese network")
        siamese = train_siamese(points, cfg.siamese, seed)
    override = None
    if cfg.labels_frac > 0:
        if truth is None:
            raise ValueError("labels_frac > 0 needs ground-truth labels in the data")
        override = reveal_labels(truth, cfg.labels_frac, seed)
    log.info("training spectral map")
    result = train_spectralnet(
        points, cfg.spectral, siamese=siamese, labels=override, oracle_vectors=oracle_vectors, callback=callback
    )
    y = embed(result.model, points)
    centroids = kmeans(y, cfg.spectral.k, seed=seed).centroids
    model = ClusterModel(result.model, centroids)
    settings = {
        "seed": seed,
        "distance": cfg.spectral.affinity.distance,
        "labels_frac": cfg.labels_frac,
        "iterations": result.iterations,
    }
    # labels come from the same nearest-centroid rule that prediction uses
    return FitResult(Bundle(model, siamese, settings), result, y, assign(model, points))
