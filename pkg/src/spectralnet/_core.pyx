# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels.

Every function here has a numpy twin in ``_fallback`` with the same
signature and the same results (up to rounding for the eigensolver).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite

cnp.import_array()


def cholesky(const double[:, ::1] a, double pivot_tol):
    """Lower Cholesky factor of ``a``.

    Returns ``(L, bad)`` where ``bad`` is the index of the first pivot that
    fell below ``pivot_tol`` (or was non-finite), and -1 on success.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double s
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] L = out
    for j in range(n):
        s = a[j, j]
        for p in range(j):
            s -= L[j, p] * L[j, p]
        if not isfinite(s) or s <= pivot_tol:
            return out, j
        L[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = a[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            L[i, j] = s / L[j, j]
    return out, -1


cdef inline double _offdiag_sq(double[:, ::1] A, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s += A[i, j] * A[i, j]
    return 2.0 * s


def jacobi_eigh(const double[:, ::1] a, int max_sweeps, double tol):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns ``(values, vectors, sweeps)`` with values unsorted and
    ``sweeps == -1`` when the sweep budget ran out.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double apq, app, aqq, tau, t, c, s, akp, akq, vkp, vkq
    cdef double total, thresh

    work = np.array(a, dtype=np.float64, copy=True)
    vecs = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] A = work
    cdef double[:, ::1] V = vecs

    total = 0.0
    for p in range(n):
        for q in range(n):
            total += A[p, q] * A[p, q]
    thresh = (tol * tol) * total

    with nogil:
        for sweep in range(max_sweeps):
            if _offdiag_sq(A, n) <= thresh:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    app = A[p, p]
                    aqq = A[q, q]
                    # after a few sweeps, drop entries too small to move the diagonal
                    if sweep > 3 and (
                        fabs(app) + 100.0 * fabs(apq) == fabs(app)
                        and fabs(aqq) + 100.0 * fabs(apq) == fabs(aqq)
                    ):
                        A[p, q] = 0.0
                        A[q, p] = 0.0
                        continue
                    tau = (aqq - app) / (2.0 * apq)
                    if tau >= 0:
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    # rows p and q are contiguous; columns are mirrored from them
                    for k in range(n):
                        akp = A[p, k]
                        akq = A[q, k]
                        A[p, k] = c * akp - s * akq
                        A[q, k] = s * akp + c * akq
                    for k in range(n):
                        A[k, p] = A[p, k]
                        A[k, q] = A[q, k]
                    A[p, p] = app - t * apq
                    A[q, q] = aqq + t * apq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for k in range(n):
                        vkp = V[k, p]
                        vkq = V[k, q]
                        V[k, p] = c * vkp - s * vkq
                        V[k, q] = s * vkp + c * vkq
        else:
            if _offdiag_sq(A, n) > thresh:
                sweep = -1
    return np.diagonal(work).copy(), vecs, sweep


def knn_select(const double[:, ::1] d, int k):
    """Indices of the ``k`` smallest entries per row, self excluded.

    Ties go to the lower column index; each row is sorted by distance.
    """
    cdef Py_ssize_t m = d.shape[0]
    cdef Py_ssize_t i, j, pos
    cdef double dij
    out = np.empty((m, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    bufd = np.empty(k, dtype=np.float64)
    cdef double[::1] bd = bufd
    cdef Py_ssize_t filled
    with nogil:
        for i in range(m):
            filled = 0
            for j in range(m):
                if j == i:
                    continue
                dij = d[i, j]
                if filled == k and dij >= bd[k - 1]:
                    continue
                # strict < keeps earlier (lower) indices ahead on ties
                pos = filled if filled < k else k - 1
                while pos > 0 and bd[pos - 1] > dij:
                    if pos < k:
                        bd[pos] = bd[pos - 1]
                        idx[i, pos] = idx[i, pos - 1]
                    pos -= 1
                bd[pos] = dij
                idx[i, pos] = j
                if filled < k:
                    filled += 1
    return out
