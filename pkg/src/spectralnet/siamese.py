"""Unsupervised Siamese affinity learning.

Positive pairs join each point to its nearest neighbors; an equal number of
negative pairs joins each anchor to a random point outside its neighbor set.
The shared network is fitted with the contrastive loss

    positive:  ||z_i - z_j||^2
    negative:  max(margin - ||z_i - z_j||, 0)^2
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .affinity import knn
from .errors import TooFewPoints
from .nn import LayerSpec, LrSchedule, Mlp, RMSprop, backward, forward, schedule_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SiameseConfig:
    n_pos_neighbors: int = 2
    margin: float = 1.0
    hidden: Tuple[LayerSpec, ...] = (LayerSpec(64, "relu"), LayerSpec(64, "relu"))
    embed_dim: Optional[int] = None
    out_activation: str = "relu"
    sample_one: bool = False
    batch_size: int = 128
    lr: float = 1e-3
    lr_decay: float = 0.1
    patience: int = 10
    lr_floor: float = 1e-8
    max_epochs: int = 60
    val_frac: float = 0.1

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.n_pos_neighbors < 1:
            raise ValueError("n_pos_neighbors must be >= 1")

    def layers(self, input_dim):
        width = self.embed_dim or min(input_dim, 10)
        return list(self.hidden) + [LayerSpec(width, self.out_activation)]


class PairSet(NamedTuple):
    i: np.ndarray
    j: np.ndarray
    positive: np.ndarray  # bool

    def __len__(self):
        return len(self.i)


def build_pairs(points, cfg, seed):
    """Balanced positive/negative pairs; deterministic for a given seed."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    k = cfg.n_pos_neighbors
    if k >= n - 1:
        raise TooFewPoints(f"n_pos_neighbors={k} leaves no non-neighbors among {n} points")
    rng = np.random.default_rng(seed)
    nbrs = knn(points, k)
    if cfg.sample_one:
        pick = rng.integers(0, k, size=n)
        pos_i = np.arange(n)
        pos_j = nbrs[np.arange(n), pick]
    else:
        pos_i = np.repeat(np.arange(n), k)
        pos_j = nbrs.ravel()

    excluded = np.zeros((n, n), dtype=bool) if n <= 4000 else None
    anchors = pos_i.copy()
    neg_j = np.empty_like(anchors)
    todo = np.arange(len(anchors))
    if excluded is not None:
        excluded[np.arange(n)[:, None], nbrs] = True
        excluded[np.arange(n), np.arange(n)] = True

    def bad(a, c):
        if excluded is not None:
            return excluded[a, c]
        return (c == a) | (nbrs[a] == c[:, None]).any(axis=1)

    # rejection sampling: the forbidden set is only k+1 of n candidates
    while todo.size:
        cand = rng.integers(0, n, size=todo.size)
        ok = ~bad(anchors[todo], cand)
        neg_j[todo[ok]] = cand[ok]
        todo = todo[~ok]

    i = np.concatenate([pos_i, anchors])
    j = np.concatenate([pos_j, neg_j])
    positive = np.concatenate([np.ones(len(pos_i), bool), np.zeros(len(anchors), bool)])
    return PairSet(i, j, positive)


def contrastive_loss(z_i, z_j, positive, margin=1.0):
    """Mean contrastive loss over a batch of pairs and its gradients.

    Returns ``(loss, grad_z_i, grad_z_j)``. Single pairs may be passed as
    1-D vectors with a scalar ``positive``.
    """
    single = np.ndim(z_i) == 1
    z_i = np.atleast_2d(np.asarray(z_i, dtype=np.float64))
    z_j = np.atleast_2d(np.asarray(z_j, dtype=np.float64))
    positive = np.atleast_1d(np.asarray(positive, dtype=bool))
    b = z_i.shape[0]
    diff = z_i - z_j
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    hinge = np.maximum(margin - dist, 0.0)
    losses = np.where(positive, dist * dist, hinge * hinge)
    # d/dz_i of max(c - d, 0)^2 is -2 (c - d) diff / d; zero at d = 0 by convention
    safe = np.where(dist > 0, dist, 1.0)
    neg_coef = np.where(dist > 0, -2.0 * hinge / safe, 0.0)
    coef = np.where(positive, 2.0, neg_coef)
    g = (coef / b)[:, None] * diff
    loss = float(losses.mean())
    if single:
        return loss, g[0], -g[0]
    return loss, g, -g


def _pair_loss_and_grads(model, x, pairs, margin):
    xb = np.vstack([x[pairs.i], x[pairs.j]])
    z, cache = forward(model, xb)
    b = len(pairs.i)
    loss, g_i, g_j = contrastive_loss(z[:b], z[b:], pairs.positive, margin)
    grads = backward(model, cache, np.vstack([g_i, g_j]))
    return loss, grads


def _subset(pairs, idx):
    return PairSet(pairs.i[idx], pairs.j[idx], pairs.positive[idx])


def pair_loss(model, points, pairs, margin=1.0):
    points = np.asarray(points, dtype=np.float64)
    z = forward(model, np.vstack([points[pairs.i], points[pairs.j]]))[0]
    b = len(pairs.i)
    return contrastive_loss(z[:b], z[b:], pairs.positive, margin)[0]


def train_siamese(points, cfg, seed, history=None, pairs=None, model=None):
    """Fit a Siamese embedding network on unsupervised pairs.

    Minibatch RMSprop on the mean contrastive loss; the learning rate is cut
    by ``lr_decay`` when the held-out pair loss stalls for ``patience``
    epochs, and training ends once it reaches ``lr_floor`` (or after
    ``max_epochs``). ``history`` (a list) receives one dict per epoch.
    """
    points = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = build_pairs(points, cfg, int(rng.integers(2**63 - 1)))
    if model is None:
        model = Mlp.init(points.shape[1], cfg.layers(points.shape[1]), rng)

    order = rng.permutation(len(pairs))
    n_val = int(round(cfg.val_frac * len(pairs)))
    val, train = _subset(pairs, order[:n_val]), _subset(pairs, order[n_val:])
    opt = RMSprop(model.params())
    sched = LrSchedule(lr=cfg.lr, decay_factor=cfg.lr_decay, patience=cfg.patience, floor=cfg.lr_floor)
    val_hist = []
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(len(train))
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            batch = _subset(train, perm[start:start + cfg.batch_size])
            loss, grads = _pair_loss_and_grads(model, points, batch, cfg.margin)
            opt.step(model.params(), grads, sched.lr)
            losses.append(loss)
        val_loss = pair_loss(model, points, val, cfg.margin) if len(val) else float(np.mean(losses))
        val_hist.append(val_loss)
        if history is not None:
            history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_loss": val_loss, "lr": sched.lr})
        sched, stop = schedule_update(sched, val_hist)
        if stop:
            log.info("siamese: learning rate floor reached after %d epochs", epoch + 1)
            break
    return model
