"""
Distributional similarity between a subset ``A`` and its source ``B``, plus
regression quality measures.

Energy distance and RBF-MMD are V-statistics (all ordered pairs, diagonal
included), so they are exactly zero for identical samples and invariant to
duplicating every row. Above ``pair_cap`` pairs per expectation term the
pairs are drawn uniformly with replacement from a seeded generator; below it
every pair is used. Pairwise sums run in fixed-size chunks so the result is
reproducible bit-for-bit.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la

from pcaqs._rng import SeedLike, derive_seed, make_rng
from pcaqs.cluster import sq_distances
from pcaqs.matrixcore import as_matrix

DEFAULT_PAIR_CAP = 100_000
DEFAULT_RIDGE = 1e-8
DEFAULT_KL_RANK = 10
_AUTO_RIDGE = 1e-8
_CHUNK = 1024
_BANDWIDTH_ROWS = 2000


# --------------------------------------------------------------------------
# pairwise accumulation


def _chunked_pair_means(A, B, fns, symmetric=False):
    totals = [0.0] * len(fns)
    for lo in range(0, A.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, A.shape[0])
        if symmetric:
            # A is B: visit the upper block row once, count off-diagonal blocks twice
            d = sq_distances(A[lo:hi], A[lo:])
            for t, fn in enumerate(fns):
                v = fn(d)
                totals[t] += float(v[:, : hi - lo].sum()) + 2.0 * float(v[:, hi - lo:].sum())
        else:
            d = sq_distances(A[lo:hi], B)
            for t, fn in enumerate(fns):
                totals[t] += float(fn(d).sum())
    return [t / (A.shape[0] * B.shape[0]) for t in totals]


def _sampled_pair_means(A, B, fns, n_pairs, rng):
    i = rng.integers(A.shape[0], size=n_pairs)
    j = rng.integers(B.shape[0], size=n_pairs)
    totals = [0.0] * len(fns)
    for lo in range(0, n_pairs, 65536):
        d = A[i[lo:lo + 65536]] - B[j[lo:lo + 65536]]
        sq = np.einsum("ij,ij->i", d, d)
        for t, fn in enumerate(fns):
            totals[t] += float(fn(sq).sum())
    return [t / n_pairs for t in totals]


def pair_means(A, B, fns, pair_cap: int | None, rng, symmetric: bool = False) -> list[float]:
    """Means of ``fn(||a - b||^2)`` over A x B for each ``fn`` (capped).

    ``symmetric=True`` asserts ``A is B`` and halves the exact work.
    """
    if pair_cap is None or A.shape[0] * B.shape[0] <= pair_cap:
        return _chunked_pair_means(A, B, fns, symmetric)
    return _sampled_pair_means(A, B, fns, int(pair_cap), rng)


def pair_mean(A, B, fn, pair_cap: int | None, rng) -> float:
    return pair_means(A, B, [fn], pair_cap, rng)[0]


def _dist(sq):
    return np.sqrt(sq)


def _rbf(h):
    gamma = 1.0 / (2.0 * h * h)
    return lambda sq: np.exp(-gamma * sq)


def _pair_match(A, B):
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("both samples must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column mismatch: A has {A.shape[1]}, B has {B.shape[1]}")
    return A, B


def _cross_terms(A, B, fns, pair_cap, master):
    """(E f(a, b), E f(a, a')) for each kernel in ``fns``."""
    ab = pair_means(A, B, fns, pair_cap, np.random.default_rng(derive_seed(master, "ab")))
    aa = _self_terms(A, fns, pair_cap, master, "aa")
    return ab, aa


def _self_terms(X, fns, pair_cap, master, tag):
    return pair_means(X, X, fns, pair_cap, np.random.default_rng(derive_seed(master, tag)),
                      symmetric=True)


def _seed_int(seed: SeedLike) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if seed is None:
        return 0
    return int(make_rng(seed).integers(2**63))


# --------------------------------------------------------------------------
# the four similarity measures


def energy_distance(A, B, pair_cap: int | None = DEFAULT_PAIR_CAP, seed: SeedLike = 0) -> float:
    """Energy statistic ``2 E|a-b| - E|a-a'| - E|b-b'|``, clamped at 0."""
    A, B = _pair_match(A, B)
    master = _seed_int(seed)
    (ab,), (aa,) = _cross_terms(A, B, [_dist], pair_cap, master)
    (bb,) = _self_terms(B, [_dist], pair_cap, master, "bb")
    return max(2.0 * ab - aa - bb, 0.0)


def mahalanobis_mean_distance(A, B, ridge: float = DEFAULT_RIDGE) -> float:
    """Distance between the means of A and B in the metric of B's covariance."""
    return _mahalanobis(A, B, ridge)[0]


def _mahalanobis(A, B, ridge, chol=None):
    A, B = _pair_match(A, B)
    if B.shape[0] < 2:
        raise ValueError("the reference sample B needs at least 2 rows")
    if chol is None:
        chol, ridge = _regularized_cholesky(np.cov(B, rowvar=False, ddof=1).reshape(B.shape[1], -1), ridge)
    diff = A.mean(axis=0) - B.mean(axis=0)
    w = la.solve_triangular(chol, diff, lower=True)
    return float(np.sqrt(w @ w)), ridge


def _regularized_cholesky(S, ridge):
    p = S.shape[0]
    try:
        L = la.cholesky(S + ridge * np.eye(p), lower=True)
        d = np.diag(L)
        # a roundoff-sized pivot means the matrix is numerically singular
        if ridge > 0 or d.min() > np.sqrt(np.finfo(float).eps) * d.max():
            return L, ridge
    except la.LinAlgError:
        if ridge > 0:
            raise ValueError("covariance is not positive definite after ridge") from None
    return la.cholesky(S + _AUTO_RIDGE * np.eye(p), lower=True), _AUTO_RIDGE


def _moments(Z):
    mu = Z.mean(axis=0)
    S = np.cov(Z, rowvar=False, ddof=1).reshape(Z.shape[1], Z.shape[1])
    return mu, S


def gaussian_kl(mu_a, S_a, mu_b, S_b) -> float:
    """Closed-form KL(N(mu_a, S_a) || N(mu_b, S_b))."""
    d = len(mu_a)
    La = la.cholesky(S_a, lower=True)
    Lb = la.cholesky(S_b, lower=True)
    M = la.solve_triangular(Lb, La, lower=True)
    w = la.solve_triangular(Lb, mu_b - mu_a, lower=True)
    logdet = 2.0 * (np.log(np.diag(Lb)).sum() - np.log(np.diag(La)).sum())
    return 0.5 * (float(np.sum(M * M)) + float(w @ w) - d + logdet)


def _source_basis(B, rank):
    mu = B.mean(axis=0)
    S = np.cov(B, rowvar=False, ddof=1).reshape(B.shape[1], B.shape[1])
    vals, vecs = la.eigh(S)
    order = np.argsort(-vals, kind="stable")
    return mu, vecs[:, order[:rank]]


def kl_gaussian(A, B, rank: int = DEFAULT_KL_RANK, ridge: float = DEFAULT_RIDGE) -> float:
    """KL(A || B) between moment-matched Gaussians on B's top-``rank`` PCs."""
    A, B = _pair_match(A, B)
    rank = min(rank, A.shape[1])
    return _kl(A, B, rank, ridge, _source_basis(B, rank))


def _kl(A, B, rank, ridge, basis, source_moments=None):
    if A.shape[0] <= rank or B.shape[0] <= rank:
        raise ValueError(f"both samples need more than rank={rank} rows")
    mu, V = basis
    I = ridge * np.eye(rank)
    mu_a, S_a = _moments((A - mu) @ V)
    mu_b, S_b = source_moments or _moments((B - mu) @ V)
    try:
        kl = gaussian_kl(mu_a, S_a + I, mu_b, S_b + I)
    except la.LinAlgError:
        raise ValueError("covariance is not positive definite after ridge") from None
    return max(kl, 0.0)


def median_bandwidth(X, seed: SeedLike = 0, max_rows: int = _BANDWIDTH_ROWS) -> float:
    """Median pairwise distance over (at most ``max_rows``) rows of ``X``.

    Falls back to the median of the non-zero distances when duplicates make
    the plain median zero.
    """
    X = as_matrix(X)
    if X.shape[0] > max_rows:
        rows = np.sort(make_rng(seed).choice(X.shape[0], size=max_rows, replace=False))
        X = X[rows]
    D = np.sqrt(sq_distances(X, X))
    iu = np.triu_indices(X.shape[0], k=1)
    d = D[iu]
    h = float(np.median(d)) if d.size else 0.0
    if h == 0.0:
        nz = d[d > 0]
        if nz.size == 0:
            raise ValueError("degenerate bandwidth: all pooled pairwise distances are zero")
        h = float(np.median(nz))
    return h


def mmd_rbf(A, B, bandwidth: float | None = None, pair_cap: int | None = DEFAULT_PAIR_CAP,
            seed: SeedLike = 0) -> float:
    """Biased squared MMD with kernel ``exp(-|x-y|^2 / (2 h^2))``.

    Without ``bandwidth`` the median heuristic is taken on the pooled sample.
    """
    A, B = _pair_match(A, B)
    master = _seed_int(seed)
    h = bandwidth if bandwidth is not None else _pooled_bandwidth(A, B, master)
    (ab,), (aa,) = _cross_terms(A, B, [_rbf(h)], pair_cap, master)
    (bb,) = _self_terms(B, [_rbf(h)], pair_cap, master, "bb")
    return max(aa + bb - 2.0 * ab, 0.0)


def _pooled_bandwidth(A, B, seed):
    return median_bandwidth(np.vstack([A, B]), seed=derive_seed(_seed_int(seed), "bandwidth"))


# --------------------------------------------------------------------------
# combined report


@dataclass
class SimilarityReport:
    energy: float
    mahalanobis: float
    kl: float
    mmd: float
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SourceReference:
    """Per-source quantities shared by every subset compared to the same ``B``.

    The bandwidth, if not given, is the median heuristic on ``B`` alone so that
    every subset is scored with the same kernel.
    """
    B: np.ndarray
    pair_cap: int | None
    seed: int
    bandwidth: float
    kl_rank: int
    ridge: float
    chol: np.ndarray
    ridge_used: float
    basis: tuple
    kl_moments: tuple
    energy_bb: float
    mmd_bb: float
    bandwidth_rule: str = "median-source"

    @classmethod
    def build(cls, B, pair_cap=DEFAULT_PAIR_CAP, seed=0, bandwidth=None,
              kl_rank=DEFAULT_KL_RANK, ridge=DEFAULT_RIDGE) -> "SourceReference":
        B = as_matrix(B, "B")
        master = _seed_int(seed)
        rule = "fixed"
        if bandwidth is None:
            rule = "median-source"
            bandwidth = median_bandwidth(B, seed=derive_seed(master, "bandwidth"))
        p = B.shape[1]
        chol, ridge_used = _regularized_cholesky(
            np.cov(B, rowvar=False, ddof=1).reshape(p, p), ridge)
        rank = min(kl_rank, p)
        basis = _source_basis(B, rank)
        energy_bb, mmd_bb = _self_terms(B, [_dist, _rbf(bandwidth)], pair_cap, master, "bb")
        return cls(
            B=B, pair_cap=pair_cap, seed=master, bandwidth=float(bandwidth),
            kl_rank=rank, ridge=ridge, chol=chol, ridge_used=ridge_used,
            basis=basis, kl_moments=_moments((B - basis[0]) @ basis[1]),
            energy_bb=energy_bb, mmd_bb=mmd_bb, bandwidth_rule=rule,
        )

    def compare(self, A) -> SimilarityReport:
        A, B = _pair_match(A, self.B)
        (ab, kab), (aa, kaa) = _cross_terms(
            A, B, [_dist, _rbf(self.bandwidth)], self.pair_cap, self.seed)
        energy = max(2.0 * ab - aa - self.energy_bb, 0.0)
        mmd = max(kaa + self.mmd_bb - 2.0 * kab, 0.0)
        maha, _ = _mahalanobis(A, B, self.ridge_used, chol=self.chol)
        kl = _kl(A, B, self.kl_rank, self.ridge, self.basis, self.kl_moments)
        return SimilarityReport(energy, maha, kl, mmd, params=self.params())

    def params(self) -> dict:
        return {
            "pair_cap": self.pair_cap,
            "seed": self.seed,
            "bandwidth": self.bandwidth,
            "bandwidth_rule": self.bandwidth_rule,
            "kernel": "rbf",
            "kl_rank": self.kl_rank,
            "ridge": self.ridge,
            "mahalanobis_ridge_used": self.ridge_used,
            "energy": "v-statistic",
            "mmd": "biased-squared",
        }


def similarity_report(A, B, pair_cap: int | None = DEFAULT_PAIR_CAP, seed: SeedLike = 0,
                      bandwidth: float | None = None, kl_rank: int = DEFAULT_KL_RANK,
                      ridge: float = DEFAULT_RIDGE) -> SimilarityReport:
    """All four measures of ``A`` against the source ``B``."""
    A, B = _pair_match(A, B)
    master = _seed_int(seed)
    rule = "fixed"
    if bandwidth is None:
        bandwidth, rule = _pooled_bandwidth(A, B, master), "median-pooled"
    maha, ridge_used = _mahalanobis(A, B, ridge)
    rank = min(kl_rank, A.shape[1])
    return SimilarityReport(
        energy=energy_distance(A, B, pair_cap, master),
        mahalanobis=maha,
        kl=_kl(A, B, rank, ridge, _source_basis(B, rank)),
        mmd=mmd_rbf(A, B, bandwidth, pair_cap, master),
        params={
            "pair_cap": pair_cap,
            "seed": master,
            "bandwidth": float(bandwidth),
            "bandwidth_rule": rule,
            "kernel": "rbf",
            "kl_rank": rank,
            "ridge": ridge,
            "mahalanobis_ridge_used": ridge_used,
            "energy": "v-statistic",
            "mmd": "biased-squared",
        },
    )


# --------------------------------------------------------------------------
# regression quality


def mse(y_true, y_pred) -> float:
    r = np.asarray(y_true, float) - np.asarray(y_pred, float)
    return float(r @ r / len(r))


def r_squared(y_true, y_pred) -> float:
    y = np.asarray(y_true, float)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return 0.0
    r = y - np.asarray(y_pred, float)
    return 1.0 - float(r @ r) / sst


def relative_mse(mse_subset: float, mse_full: float) -> float:
    """``mse_subset / mse_full``."""
    if mse_full <= 0:
        raise ValueError("mse_full must be positive")
    return mse_subset / mse_full
