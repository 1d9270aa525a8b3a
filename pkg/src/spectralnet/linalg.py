"""Dense linear algebra: Cholesky, Cholesky-QR, symmetric eigensolver,
and the squared Grassmann distance between column spaces.

Matrices are plain 2-D float64 numpy arrays.
"""

from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels
from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

# Above this size the Jacobi solver is too slow on one core (about n^3 * 10
# sweeps); ``sym_eigen(method="auto")`` hands larger problems to LAPACK.
JACOBI_MAX_N = 600
JACOBI_MAX_SWEEPS = 60
JACOBI_TOL = 1e-14
PIVOT_RTOL = 1e-12


class EigenPair(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


def _as_matrix(a, name="matrix"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def cholesky(gram):
    """Lower-triangular ``L`` with ``L @ L.T == gram``.

    Raises NotPositiveDefinite if any pivot drops below
    ``1e-12 * trace(gram) / k``; no jitter is added.
    """
    gram = _as_matrix(gram, "gram")
    k = gram.shape[0]
    if gram.shape[1] != k:
        raise DimensionMismatch(f"gram must be square, got {gram.shape}")
    if not np.all(np.isfinite(gram)):
        raise NotPositiveDefinite("gram matrix has non-finite entries", pivot=0)
    trace = float(np.trace(gram))
    tol = PIVOT_RTOL * trace / k if trace > 0 else 0.0
    L, bad = _kernels.cholesky(gram, tol)
    if bad >= 0:
        raise NotPositiveDefinite(f"Cholesky pivot {bad} is not positive (rank-deficient input)", pivot=bad)
    return L


def cholesky_qr(a):
    """Orthonormal ``Q`` with the same nested column spans as ``a``.

    Computed as ``Q = a (L^-1)^T`` where ``L L^T = a^T a``.
    """
    a = _as_matrix(a, "a")
    if a.shape[0] < a.shape[1]:
        # rank <= rows < cols; roundoff can push the last pivot past the tolerance
        raise NotPositiveDefinite(f"{a.shape[0]} rows cannot span {a.shape[1]} columns", pivot=a.shape[0])
    L = cholesky(a.T @ a)
    return solve_triangular(L, a.T, lower=True).T


def _check_symmetric(a):
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")


def sym_eigen(a, method="auto"):
    """Full eigendecomposition of a symmetric matrix, values ascending.

    ``method`` is "jacobi" (cyclic Jacobi rotations), "lapack"
    (numpy.linalg.eigh) or "auto", which uses Jacobi up to JACOBI_MAX_N.
    """
    a = _as_matrix(a)
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_N else "lapack"
    if method == "lapack":
        values, vectors = np.linalg.eigh(a)
        return EigenPair(values, vectors)
    if method != "jacobi":
        raise ValueError(f"unknown eigensolver method {method!r}")
    if not np.all(np.isfinite(a)):
        raise NoConvergence("matrix has non-finite entries")
    values, vectors, sweeps = _kernels.jacobi_eigh(a, JACOBI_MAX_SWEEPS, JACOBI_TOL)
    if sweeps < 0:
        raise NoConvergence(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    order = np.argsort(values, kind="stable")
    return EigenPair(values[order], np.ascontiguousarray(vectors[:, order]))


def grassmann_sq(a, b):
    """Squared Grassmann distance between the column spaces of ``a`` and ``b``.

    Equals ``k - sum(cos^2 theta_i)`` over the principal angles; both inputs
    are orthonormalized first, so any full-column-rank basis works. Two
    Cholesky-QR passes are used so that mildly ill-conditioned bases (e.g.
    network outputs on held-out points) still come out orthonormal.
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    k = a.shape[1]
    qa = cholesky_qr(cholesky_qr(a))
    qb = cholesky_qr(cholesky_qr(b))
    # sum of squared singular values of Qa^T Qb is its squared Frobenius norm
    cos_sq = float(np.sum((qa.T @ qb) ** 2))
    return float(min(max(k - cos_sq, 0.0), k))
