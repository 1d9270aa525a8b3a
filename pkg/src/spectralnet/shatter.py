"""A point set shattered by thresholded spectral embeddings.

For ``m`` base points on a unit grid and any dichotomy of them, the builder
produces ``10 m`` points in 3-space with a balanced partition ``S | T`` such
that

* every two points of one side are joined by a path inside that side whose
  steps are at most ``b < 1`` long (property a), and
* every point of ``S`` is at least 1 away from every point of ``T``
  (property b).

Layout: ``2 m`` grid cells at ``Z = 0`` (the ``m`` base points followed by
``m`` balancing points), a copy of each ``S`` cell at ``Z = 1`` and of each
``T`` cell at ``Z = -1``, the midpoint between every cell and its copy, and
``2 m`` fill points per side spaced along a minimum spanning tree of that
side's lifted copies.

:func:`verify_shattering` then checks that the sign of the second Laplacian
eigenvector of the complete Gaussian graph recovers ``S | T`` for some
scale in a decreasing sweep.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConstructionInvariantViolated, NoSigmaAchieves
from .linalg import sym_eigen

CROSS_TOL = 1e-12
SIGMA_START = 1.0
SIGMA_STOP = 1e-3
SIGMA_RATIO = 0.7


@dataclass(frozen=True)
class Certificates:
    bottleneck: float  # b: largest step needed to walk within either side
    min_cross: float  # smallest S-to-T distance

    @property
    def property_a(self):
        return self.bottleneck < 1.0

    @property
    def property_b(self):
        return self.min_cross >= 1.0 - CROSS_TOL

    def alpha(self, sigma):
        return math.exp(-self.bottleneck**2 / (2.0 * sigma**2))

    def beta(self, sigma):
        return math.exp(-1.0 / (2.0 * sigma**2))


@dataclass(frozen=True)
class ShatterInstance:
    m: int
    dichotomy: Tuple[int, ...]  # 1 = S, 0 = T, one per base point
    base_points: np.ndarray  # m x 3
    full_points: np.ndarray  # 10m x 3, base points first
    partition: np.ndarray  # bool per full point, True = S
    certificates: Certificates

    @property
    def n(self):
        return self.full_points.shape[0]


@dataclass(frozen=True)
class ShatterResult:
    success: bool
    sigma: Optional[float]
    tried: int
    # n/sqrt(2) * sqrt(beta/alpha) at the achieving sigma; below 1/sqrt(2n)
    # the sign pattern is guaranteed rather than merely observed
    spread_bound: Optional[float] = None
    n: int = 0

    @property
    def guaranteed(self):
        return self.spread_bound is not None and self.spread_bound < 1.0 / math.sqrt(2.0 * self.n)


def grid_cells(count):
    """``count`` cells of the smallest square unit grid holding them, row-major."""
    side = max(1, math.ceil(math.sqrt(count)))
    idx = np.arange(count)
    return np.column_stack([idx % side, idx // side]).astype(np.float64)


def prim_edges(points):
    """Edges ``(i, j)`` of a Euclidean minimum spanning tree (dense Prim)."""
    n = points.shape[0]
    if n < 2:
        return []
    dist = cdist(points, points)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        edges.append((int(parent[j]), j))
        in_tree[j] = True
        closer = dist[j] < best
        parent[closer] = j
        best = np.minimum(best, dist[j])
    return edges


def bottleneck(points):
    """Smallest ``b`` such that a path with steps ``<= b`` joins every pair."""
    edges = prim_edges(points)
    if not edges:
        return 0.0
    return max(float(np.linalg.norm(points[i] - points[j])) for i, j in edges)


def allocate(lengths, total):
    """Split ``total`` integer points proportionally to ``lengths`` (largest remainder)."""
    lengths = np.asarray(lengths, dtype=np.float64)
    share = total * lengths / lengths.sum()
    counts = np.floor(share).astype(np.int64)
    left = total - int(counts.sum())
    # ties broken by edge order so the result is deterministic
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:left]] += 1
    return counts


def _fill(lifted, count, z_sign):
    edges = prim_edges(lifted)
    if not edges:
        # a lone lifted point: stack the fill straight up (or down), half a unit apart
        top = lifted[0]
        return np.array([top + np.array([0.0, 0.0, z_sign * 0.5 * (i + 1)]) for i in range(count)])
    lengths = [np.linalg.norm(lifted[i] - lifted[j]) for i, j in edges]
    out = []
    for (i, j), c in zip(edges, allocate(lengths, count)):
        for t in range(1, c + 1):
            s = t / (c + 1)
            out.append((1 - s) * lifted[i] + s * lifted[j])
    return np.array(out)


def certify(points, partition):
    s, t = points[partition], points[~partition]
    return Certificates(
        bottleneck=max(bottleneck(s), bottleneck(t)),
        min_cross=float(cdist(s, t).min()),
    )


def _balance(dichotomy, seed):
    m = len(dichotomy)
    need_s = m - int(sum(dichotomy))
    need_t = m - need_s
    # alternate S, T, S, ... (the seed picks who goes first) until a side is full
    turn = int(np.random.default_rng(seed).integers(2))
    sides = []
    for _ in range(m):
        want_s = turn == 1
        if (want_s and need_s > 0) or need_t == 0:
            sides.append(1)
            need_s -= 1
        else:
            sides.append(0)
            need_t -= 1
        turn ^= 1
    return sides


def build_shatter_instance(m, dichotomy, seed=0):
    """Build the ``10 m`` point set realizing ``dichotomy`` (1 = S, 0 = T)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    dichotomy = tuple(int(bool(v)) for v in dichotomy)
    if len(dichotomy) != m:
        raise ValueError(f"dichotomy needs {m} entries, got {len(dichotomy)}")

    cells = np.column_stack([grid_cells(2 * m), np.zeros(2 * m)])
    sides = np.array(dichotomy + tuple(_balance(dichotomy, seed)), dtype=bool)

    blocks, labels = [cells], [sides]
    lifts = np.where(sides, 1.0, -1.0)
    copies = cells + np.column_stack([np.zeros((2 * m, 2)), lifts])
    blocks += [copies, (cells + copies) / 2.0]
    labels += [sides, sides]
    for flag, z in ((True, 1.0), (False, -1.0)):
        fill = _fill(copies[sides == flag], 2 * m, z)
        blocks.append(fill)
        labels.append(np.full(len(fill), flag))

    points = np.vstack(blocks)
    partition = np.concatenate(labels)
    cert = certify(points, partition)
    if points.shape[0] != 10 * m or partition.sum() != 5 * m:
        raise ConstructionInvariantViolated(f"built {points.shape[0]} points with |S| = {partition.sum()}")
    if not cert.property_a:
        raise ConstructionInvariantViolated(f"within-side bottleneck {cert.bottleneck} is not below 1")
    if not cert.property_b:
        raise ConstructionInvariantViolated(f"cross distance {cert.min_cross} is below 1")
    return ShatterInstance(m, dichotomy, cells[:m].copy(), points, partition, cert)


def sigma_sweep(start=SIGMA_START, stop=SIGMA_STOP, ratio=SIGMA_RATIO):
    """Geometric sweep ``start, start*ratio, ...`` down to ``stop``."""
    out = []
    s = start
    while s >= stop * (1 - 1e-12):
        out.append(s)
        s *= ratio
    return out


def complete_laplacian(points, sigma):
    w = np.exp(-cdist(points, points, "sqeuclidean") / (2.0 * sigma**2))
    np.fill_diagonal(w, 0.0)
    return np.diag(w.sum(axis=1)) - w


def fiedler_signs(points, sigma, method="auto"):
    """``y > 0`` for the second-smallest eigenvector of the complete-graph Laplacian."""
    vec = sym_eigen(complete_laplacian(points, sigma), method=method).vectors[:, 1]
    return vec > 0


def separation_holds(instance, sigma):
    """Check the (alpha, beta) bounds edge by edge at scale ``sigma``."""
    pts, part = instance.full_points, instance.partition
    cert = instance.certificates
    alpha, beta = cert.alpha(sigma), cert.beta(sigma)
    w = np.exp(-cdist(pts, pts, "sqeuclidean") / (2.0 * sigma**2))
    cross = w[np.ix_(part, ~part)]
    path_min = np.inf
    for side in (part, ~part):
        sub = pts[side]
        wsub = w[np.ix_(side, side)]
        for i, j in prim_edges(sub):
            path_min = min(path_min, wsub[i, j])
    return bool(path_min >= alpha * (1 - 1e-12) and cross.max() <= beta * (1 + 1e-12))


def verify_shattering(instance, sigmas: Optional[Sequence[float]] = None, method="auto", require=False):
    """Walk ``sigmas`` (largest first) until the eigenvector signs match ``S | T``."""
    sigmas = sigma_sweep() if sigmas is None else list(sigmas)
    part = instance.partition
    n = instance.n
    for count, sigma in enumerate(sigmas, start=1):
        signs = fiedler_signs(instance.full_points, sigma, method)
        if np.array_equal(signs, part) or np.array_equal(signs, ~part):
            b = instance.certificates.bottleneck
            bound = n / math.sqrt(2.0) * math.exp(-(1.0 - b * b) / (4.0 * sigma**2))
            return ShatterResult(True, sigma, count, bound, n)
    if require:
        raise NoSigmaAchieves(f"no sigma among {len(sigmas)} realizes the partition")
    return ShatterResult(False, None, len(sigmas), None, n)


def dichotomies(m):
    """All ``2**m`` dichotomies; bit ``i`` of the mask is base point ``i``."""
    for mask in range(2**m):
        yield mask, tuple((mask >> i) & 1 for i in range(m))
