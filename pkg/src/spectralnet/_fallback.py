"""Pure numpy versions of the kernels in ``_core.pyx``.

Selected automatically when the compiled extension is unavailable, or when
``SPECTRALNET_PURE=1`` is set in the environment.
"""

import numpy as np


def cholesky(a, pivot_tol):
    n = a.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = a[j, j] - L[j, :j] @ L[j, :j]
        if not np.isfinite(s) or s <= pivot_tol:
            return L, j
        L[j, j] = np.sqrt(s)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, -1


def _round_robin(n):
    """Pairings for a round-robin tournament: n-1 rounds of n/2 disjoint pairs."""
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        rounds.append((np.array([p for p, _ in pairs], dtype=np.intp),
                       np.array([q for _, q in pairs], dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a, max_sweeps, tol):
    """Jacobi eigensolver using parallel (round-robin) ordering.

    Each round applies n/2 disjoint rotations at once, so one sweep costs
    n-1 vectorized updates instead of n(n-1)/2 scalar ones.
    """
    A = np.array(a, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    thresh = tol * tol * np.sum(A * A)
    rounds = _round_robin(n)

    def off(M):
        # explicit masking; sum(M*M) - sum(diag**2) cancels catastrophically
        D = M.copy()
        np.fill_diagonal(D, 0.0)
        return np.sum(D * D)

    for sweep in range(max_sweeps):
        if off(A) <= thresh:
            return np.diag(A).copy(), V, sweep
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            app, aqq = A[P, P], A[Q, Q]
            tau = (aqq - app) / (2.0 * apq)
            t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t[tau == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rp, rq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = cp * c - cq * s
            A[:, Q] = cp * s + cq * c
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = vp * c - vq * s
            V[:, Q] = vp * s + vq * c
    if off(A) <= thresh:
        return np.diag(A).copy(), V, max_sweeps
    return np.diag(A).copy(), V, -1


def knn_select(d, k):
    m = d.shape[0]
    masked = np.array(d, dtype=np.float64, copy=True)
    masked[np.arange(m), np.arange(m)] = np.inf
    # stable sort keeps lower indices first among equal distances
    return np.argsort(masked, axis=1, kind="stable")[:, :k].astype(np.int64)
