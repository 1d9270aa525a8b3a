"""Stochastic training of the spectral map.

Each iteration alternates two steps on independent random minibatches:

* orthogonalization: set the frozen output map to ``sqrt(m) (L^-1)^T`` where
  ``L L^T = Yt^T Yt`` for the pre-output activations ``Yt``, so that
  ``(1/m) Y^T Y = I`` on that batch;
* gradient: build the batch affinity ``W``, evaluate the spectral loss and
  update every weight except the output map.

The output map is never a trainable parameter. By default
(``output_grad="batch"``) the gradient step orthonormalizes its own batch and
differentiates through that Cholesky factor, which makes the step invariant
to the scale of the pre-output activations. With ``output_grad="frozen"`` the
map from the orthogonalization step is held fixed during backpropagation;
that variant lets the pre-output columns shrink towards a rank-one Gram
matrix on curved, weakly connected data.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .affinity import AffinityConfig, embed_points, gaussian_affinity
from .errors import DimensionMismatch, NonFiniteLoss, NotPositiveDefinite, RankDeficientBatch, TooFewPoints, ZeroDegree
from .linalg import cholesky, grassmann_sq
from .nn import LayerSpec, LrSchedule, Mlp, RMSprop, backward, forward, schedule_update

log = logging.getLogger(__name__)

LOSS_VARIANTS = ("unnormalized", "normalized")
LOSS_SCALINGS = ("inverse_m", "inverse_m_squared")
OUTPUT_GRADS = ("batch", "frozen")


@dataclass(frozen=True)
class SpectralConfig:
    k: int = 2
    hidden: Tuple[LayerSpec, ...] = (LayerSpec(128, "relu"), LayerSpec(128, "relu"), LayerSpec(64, "relu"))
    out_activation: str = "tanh"
    batch_size: int = 256
    ortho_batch_size: int = 256
    loss_variant: str = "unnormalized"
    loss_scaling: str = "inverse_m"
    lr: float = 1e-3
    lr_decay: float = 0.1
    patience: int = 10
    lr_floor: float = 1e-8
    iters_per_epoch: int = 50
    max_epochs: int = 200
    val_frac: float = 0.1
    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    seed: int = 0
    output_grad: str = "batch"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")
        if self.loss_scaling not in LOSS_SCALINGS:
            raise ValueError(f"loss_scaling must be one of {LOSS_SCALINGS}")
        if self.output_grad not in OUTPUT_GRADS:
            raise ValueError(f"output_grad must be one of {OUTPUT_GRADS}")
        if min(self.batch_size, self.ortho_batch_size) < self.k:
            raise ValueError("batch sizes must be at least k")

    def layers(self):
        return list(self.hidden) + [LayerSpec(self.k, self.out_activation)]


def orthonorm_weights(y_tilde):
    """``sqrt(m) (L^-1)^T`` for ``L L^T = Yt^T Yt``; raises RankDeficientBatch."""
    m = y_tilde.shape[0]
    try:
        L = cholesky(y_tilde.T @ y_tilde)
    except NotPositiveDefinite as exc:
        raise RankDeficientBatch(str(exc), pivot=exc.pivot) from None
    k = L.shape[0]
    return np.sqrt(m) * solve_triangular(L, np.eye(k), lower=True).T


def orthonorm_step(model, batch):
    """Refresh ``model.frozen_output`` from the batch; returns the new map."""
    y_tilde = forward(model, batch, frozen=False)[0]
    model.frozen_output = orthonorm_weights(y_tilde)
    return model.frozen_output


def orthonorm_forward(y_tilde):
    """``Y = sqrt(m) Yt (L^-1)^T`` computed on the batch itself, plus what
    :func:`orthonorm_backward` needs."""
    f = orthonorm_weights(y_tilde)
    return y_tilde @ f, f


def orthonorm_backward(y, f, grad_y):
    """dLoss/dYt for ``Y = Yt F(Yt)``, differentiating through the Cholesky factor.

    With ``Q = Y / sqrt(m)`` and ``R = L^T`` this is the thin-QR adjoint
    ``(Qb - Q sym(tril(Qb^T Q))) R^-T`` where only the lower triangle of
    ``Qb^T Q`` is mirrored.
    """
    m = y.shape[0]
    q = y / np.sqrt(m)
    qb = grad_y * np.sqrt(m)
    mm = qb.T @ q
    low = np.tril(mm)
    sym = low + np.tril(mm, -1).T
    # R^-T = L^-1 = f^T / sqrt(m)
    return (qb - q @ sym) @ (f.T / np.sqrt(m))


def ortho_error(y):
    """``||(1/m) Y^T Y - I||_F``."""
    m, k = y.shape
    return float(np.linalg.norm(y.T @ y / m - np.eye(k)))


def spectral_loss(y, w, variant="unnormalized", scaling="inverse_m"):
    """Spectral loss of outputs ``y`` under affinity batch ``w`` and dLoss/dy.

    unnormalized: ``s * sum_ij W_ij ||y_i - y_j||^2``
    normalized:   ``s * sum_ij W_ij ||y_i/d_i - y_j/d_j||^2``
    with ``s = 1/m`` or ``1/m^2``.
    """
    y = np.asarray(y, dtype=np.float64)
    W, d = w.w, w.degrees
    m = y.shape[0]
    if W.shape != (m, m):
        raise DimensionMismatch(f"affinity is {W.shape} for {m} outputs")
    s = 1.0 / m if scaling == "inverse_m" else 1.0 / (m * m)
    if variant == "normalized":
        if np.any(d <= 0):
            raise ZeroDegree("normalized loss needs every degree d_i > 0")
        u = y / d[:, None]
    else:
        u = y
    loss = s * float(np.sum(W * cdist(u, u, "sqeuclidean")))
    # W symmetric: d/du of sum_ij W_ij ||u_i - u_j||^2 is 4 (D - W) u
    grad_u = 4.0 * s * (d[:, None] * u - W @ u)
    grad = grad_u / d[:, None] if variant == "normalized" else grad_u
    return loss, grad


def embed(model, points):
    """Row ``i`` is the trained map applied to ``points[i]``."""
    if model.frozen_output is None:
        raise ValueError("model has no orthonormalization layer installed")
    return forward(model, points)[0]


@dataclass
class TrainResult:
    model: Mlp
    history: List[dict]
    train_idx: np.ndarray
    val_idx: np.ndarray
    iterations: int
    max_ortho_error: float
    seconds: float
    # (epoch, model) snapshots taken whenever the learning rate is cut, plus the final model
    checkpoints: List[Tuple[int, Mlp]] = field(default_factory=list)


def _sample(rng, pool, size):
    return pool[rng.choice(pool.size, size=min(size, pool.size), replace=False)]


def train_spectralnet(
    points,
    cfg,
    siamese=None,
    labels=None,
    oracle_vectors=None,
    callback: Optional[Callable] = None,
):
    """Train the spectral map on ``points`` (n x d).

    ``siamese`` supplies the distance when ``cfg.affinity.distance`` is
    "siamese". ``labels`` (ints, -1 = unknown) switches on the label
    override of the batch affinities. With ``oracle_vectors`` (n x k) the
    squared Grassmann distance of the full embedding to them is logged
    after every epoch.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)
    if n < max(cfg.batch_size, cfg.ortho_batch_size):
        raise TooFewPoints(f"{n} points is fewer than the batch size")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise DimensionMismatch("labels must have one entry per point")

    # affinities are measured in Siamese space when requested; embed once
    use_siamese = cfg.affinity.distance == "siamese"
    if use_siamese and siamese is None:
        raise ValueError("affinity distance is 'siamese' but no Siamese model was given")
    z = embed_points(x, siamese if use_siamese else None)
    aff_cfg = AffinityConfig(
        cfg.affinity.n_neighbors, cfg.affinity.scale_mode, cfg.affinity.scale_k, cfg.affinity.fixed_sigma, "euclidean"
    )

    perm = rng.permutation(n)
    n_val = int(round(cfg.val_frac * n))
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    m = min(cfg.batch_size, train_idx.size)
    mo = min(cfg.ortho_batch_size, train_idx.size)

    model = Mlp.init(x.shape[1], cfg.layers(), rng)
    opt = RMSprop(model.params())
    sched = LrSchedule(lr=cfg.lr, decay_factor=cfg.lr_decay, patience=cfg.patience, floor=cfg.lr_floor)

    val_w = None
    if n_val > cfg.affinity.n_neighbors:
        val_w = gaussian_affinity(z[val_idx], aff_cfg, labels=None if labels is None else labels[val_idx])

    history, val_hist, checkpoints = [], [], []
    max_ortho = 0.0
    it = 0
    t0 = time.perf_counter()

    def ortho_with_retry():
        for attempt in (0, 1):
            batch = _sample(rng, train_idx, mo)
            try:
                orthonorm_step(model, x[batch])
                return batch
            except RankDeficientBatch as exc:
                if attempt == 1:
                    raise RankDeficientBatch(f"iteration {it}: {exc}", pivot=exc.pivot, iteration=it) from None
                log.warning("iteration %d: rank-deficient orthogonalization batch; retrying", it)

    for epoch in range(cfg.max_epochs):
        losses = []
        for _ in range(cfg.iters_per_epoch):
            ob = ortho_with_retry()
            max_ortho = max(max_ortho, ortho_error(forward(model, x[ob])[0]))

            gb = _sample(rng, train_idx, m)
            w = gaussian_affinity(z[gb], aff_cfg, labels=None if labels is None else labels[gb])
            if cfg.output_grad == "batch":
                yt, cache = forward(model, x[gb], frozen=False)
                try:
                    y, f = orthonorm_forward(yt)
                except RankDeficientBatch as exc:
                    raise RankDeficientBatch(f"iteration {it}: {exc}", pivot=exc.pivot, iteration=it) from None
            else:
                y, cache = forward(model, x[gb])
            loss, grad_y = spectral_loss(y, w, cfg.loss_variant, cfg.loss_scaling)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"iteration {it}: loss is {loss}")
            if cfg.output_grad == "batch":
                grad_y = orthonorm_backward(y, f, grad_y)
            opt.step(model.params(), backward(model, cache, grad_y), sched.lr)
            losses.append(loss)
            it += 1

        if val_w is not None:
            val_loss = spectral_loss(forward(model, x[val_idx])[0], val_w, cfg.loss_variant, cfg.loss_scaling)[0]
        else:
            val_loss = float(np.mean(losses))
        val_hist.append(val_loss)
        row = {"iter": it, "loss": float(np.mean(losses)), "val_loss": val_loss, "lr": sched.lr}
        if oracle_vectors is not None:
            row["grassmann_sq"] = grassmann_sq(forward(model, x)[0], oracle_vectors)
        history.append(row)
        if callback is not None:
            callback(epoch, model, row)
        prev_lr = sched.lr
        sched, stop = schedule_update(sched, val_hist)
        if sched.lr < prev_lr and not stop:
            checkpoints.append((epoch, model.copy()))
        if stop:
            log.info("spectral map: learning rate floor reached after %d epochs", epoch + 1)
            break

    # finish with a fresh orthogonalization so the frozen map matches the final weights
    ob = ortho_with_retry()
    max_ortho = max(max_ortho, ortho_error(forward(model, x[ob])[0]))
    checkpoints.append((len(history) - 1, model.copy()))
    return TrainResult(model, history, train_idx, val_idx, it, max_ortho, time.perf_counter() - t0, checkpoints)
