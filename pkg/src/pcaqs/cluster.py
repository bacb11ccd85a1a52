"""
Lloyd's k-means with k-means++ multi-start, nearest-centroid assignment, and a
(sub-sampled) silhouette score. Euclidean distance throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from pcaqs._rng import SeedLike, derive_seed, make_rng
from pcaqs.matrixcore import as_matrix

_CHUNK = 2048


def sq_distances(X: np.ndarray, C: np.ndarray, x_norms: np.ndarray | None = None) -> np.ndarray:
    """Squared Euclidean distances, rows of X against rows of C."""
    if x_norms is None:
        x_norms = np.einsum("ij,ij->i", X, X)
    d = X @ C.T
    d *= -2.0
    d += x_norms[:, None]
    d += np.einsum("ij,ij->i", C, C)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _nearest(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = X.shape[0]
    labels = np.empty(n, dtype=np.intp)
    dmin = np.empty(n)
    for lo in range(0, n, _CHUNK):
        d = sq_distances(X[lo:lo + _CHUNK], C)
        labels[lo:lo + _CHUNK] = np.argmin(d, axis=1)
        dmin[lo:lo + _CHUNK] = d[np.arange(d.shape[0]), labels[lo:lo + _CHUNK]]
    return labels, dmin


def assign_nearest(centroids, X) -> np.ndarray:
    """Index of the nearest centroid for each row; ties go to the lowest index."""
    C = as_matrix(centroids, "centroids")
    X = as_matrix(X)
    if C.shape[1] != X.shape[1]:
        raise ValueError(f"centroids have {C.shape[1]} columns, X has {X.shape[1]}")
    return _nearest(X, C)[0]


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    n_iter: int
    best_of: int
    start_inertias: tuple[float, ...] = ()


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator,
                    n_trials: int | None = None) -> np.ndarray:
    """Greedy k-means++ seeding.

    Each new center is the best of ``n_trials`` D^2-weighted candidates,
    judged by the resulting potential. ``n_trials=1`` is plain k-means++.
    """
    n = X.shape[0]
    if n_trials is None:
        n_trials = 2 + int(np.log(k))
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    norms = np.einsum("ij,ij->i", X, X)
    closest = sq_distances(X, centers[:1], norms).ravel()
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a center
            cand = rng.integers(n, size=n_trials)
        else:
            cand = np.searchsorted(np.cumsum(closest), rng.random(n_trials) * total, side="right")
            cand = np.minimum(cand, n - 1)
        d = sq_distances(X, X[cand], norms)
        np.minimum(d, closest[:, None], out=d)
        best = int(np.argmin(d.sum(axis=0)))
        centers[c] = X[cand[best]]
        closest = d[:, best].copy()
    return centers


def _lloyd(X, centers, max_iter, tol_abs):
    """One Lloyd run. Returns centers, labels, inertia, iterations, inertia history."""
    k = centers.shape[0]
    history = []
    labels, dmin = _nearest(X, centers)
    it = 0
    for it in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=k)
        onehot = sparse.csr_matrix((np.ones(len(labels)), (labels, np.arange(len(labels)))),
                                   shape=(k, len(labels)))
        sums = onehot @ X
        new = centers.copy()
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            # reseed empties at the points worst served by their current center
            far = np.argsort(-dmin, kind="stable")[: empty.size]
            new[empty] = X[far]
        shift = float(((new - centers) ** 2).sum())
        centers = new
        labels, dmin = _nearest(X, centers)
        history.append(float(dmin.sum()))
        if shift <= tol_abs and not empty.size:
            break
    return centers, labels, float(dmin.sum()), it, history


def kmeans(
    X,
    k: int,
    n_starts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-4,
    seed: SeedLike = None,
    seeding_trials: int | None = None,
) -> KMeansResult:
    """Best-of-``n_starts`` Lloyd k-means.

    ``tol`` is relative: iteration stops once the summed squared centroid
    shift falls below ``tol`` times the mean per-feature variance of ``X``.
    Each start draws its k-means++ seeding from a seed derived from ``seed``
    and the start index; ties on inertia keep the earliest start.
    ``seeding_trials`` is passed to :func:`kmeans_plusplus` (None = greedy
    default, 1 = classical k-means++).
    """
    X = as_matrix(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    master = _master_seed(seed)
    tol_abs = tol * float(np.mean(X.var(axis=0)))

    best = None
    inertias = []
    for s in range(n_starts):
        rng = np.random.default_rng(derive_seed(master, s))
        init = kmeans_plusplus(X, k, rng, n_trials=seeding_trials)
        centers, labels, inertia, it, _ = _lloyd(X, init, max_iter, tol_abs)
        inertias.append(inertia)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia, it)
    centers, labels, inertia, it = best
    return KMeansResult(
        centroids=centers,
        assignments=labels,
        inertia=inertia,
        n_iter=it,
        best_of=n_starts,
        start_inertias=tuple(inertias),
    )


def _master_seed(seed: SeedLike) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int(make_rng(seed).integers(2**63))


def silhouette(X, assignments, sample_cap: int | None = 2000, seed: SeedLike = None) -> float:
    """Mean silhouette width.

    When ``n > sample_cap`` a uniform subsample of ``sample_cap`` rows is scored
    against itself. Points alone in their cluster (within the scored set)
    contribute 0.
    """
    X = as_matrix(X)
    labels = np.asarray(assignments).ravel()
    if len(labels) != X.shape[0]:
        raise ValueError("assignments length does not match X")
    if np.unique(labels).size < 2:
        raise ValueError("silhouette needs at least 2 non-empty clusters")
    n = X.shape[0]
    if sample_cap is not None and n > sample_cap:
        rows = np.sort(make_rng(seed).choice(n, size=sample_cap, replace=False))
        X, labels = X[rows], labels[rows]
    _, codes = np.unique(labels, return_inverse=True)
    codes = codes.ravel()
    m = len(codes)
    K = int(codes.max()) + 1
    if K < 2:
        raise ValueError("silhouette needs at least 2 non-empty clusters in the scored sample")
    onehot = np.zeros((m, K))
    onehot[np.arange(m), codes] = 1.0
    sizes = onehot.sum(axis=0)

    widths = np.zeros(m)
    step = max(1, min(_CHUNK, 4_000_000 // m))  # keep each distance block modest
    for lo in range(0, m, step):
        D = np.sqrt(sq_distances(X[lo:lo + step], X))
        # self-distance must not leak into the intra-cluster mean
        D[np.arange(D.shape[0]), np.arange(lo, lo + D.shape[0])] = 0.0
        sums = D @ onehot
        c = codes[lo:lo + step]
        own = sizes[c]
        r = np.arange(len(c))
        a = np.where(own > 1, sums[r, c] / np.maximum(own - 1, 1), 0.0)
        other = sums / sizes[None, :]
        other[r, c] = np.inf
        b = other.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        s[own <= 1] = 0.0
        widths[lo:lo + step] = s
    return float(np.clip(widths.mean(), -1.0, 1.0))
