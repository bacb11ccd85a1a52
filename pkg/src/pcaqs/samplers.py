"""
Row-selection strategies.

``pcaqs_sample`` stratifies rows by composite quantile group in PC space and
takes ``min(ceil(rate * N_g), N_g)`` rows from every group, either at random
or greedily under an optimal-design criterion evaluated on the group's PC
scores. ``srs_sample``, ``leverage_sample`` and ``coreset_sample`` are the
baselines it is compared with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pcaqs._rng import SeedLike, derive_seed, make_rng
from pcaqs.cluster import assign_nearest, kmeans
from pcaqs.matrixcore import as_matrix, fit_pca, transform, truncated_svd
from pcaqs.stratify import build_group_index, group_quota


class Criterion(str, Enum):
    RANDOM = "random"
    A_OPTIMAL = "a_optimal"
    D_OPTIMAL = "d_optimal"
    G_OPTIMAL = "g_optimal"
    UNCERTAINTY = "uncertainty"


_METHOD_TAGS = {
    Criterion.RANDOM: "pcaqs-random",
    Criterion.A_OPTIMAL: "pcaqs-aopt",
    Criterion.D_OPTIMAL: "pcaqs-dopt",
    Criterion.G_OPTIMAL: "pcaqs-gopt",
    Criterion.UNCERTAINTY: "pcaqs-uncert",
}


@dataclass(frozen=True)
class SelectorCriterion:
    kind: Criterion = Criterion.RANDOM
    ridge_eps: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "kind", Criterion(self.kind))
        if self.kind is not Criterion.RANDOM and not self.ridge_eps > 0:
            raise ValueError("ridge_eps must be positive for information-matrix criteria")


@dataclass
class RetentiveSubset:
    indices: np.ndarray
    method: str
    retention_rate: float
    seed: int | None
    weights: np.ndarray | None = None
    group_manifest: dict[str, int] | None = None
    n_components: int | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.indices)

    def to_manifest(self) -> dict:
        out = {
            "method": self.method,
            "seed": self.seed,
            "retention_rate": self.retention_rate,
            "n_selected": int(len(self.indices)),
            "indices": [int(i) for i in self.indices],
        }
        if self.n_components is not None:
            out["n_components"] = self.n_components
        if self.group_manifest is not None:
            out["group_counts"] = dict(self.group_manifest)
        if self.weights is not None:
            out["weights"] = [float(w) for w in self.weights]
        out.update(self.extra)
        return out


def _check_rate(rate: float) -> None:
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"retention rate must lie in (0, 1], got {rate}")


def _target_size(n: int, rate: float) -> int:
    x = rate * n
    return min(math.ceil(x - 1e-9 * x), n)


def _as_seed(seed: SeedLike) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int(make_rng(seed).integers(2**63))


# --------------------------------------------------------------------------
# within-group design selection


def design_select(candidates, quota: int, criterion: SelectorCriterion | str = "random",
                  seed: SeedLike = None) -> np.ndarray:
    """Pick ``quota`` local row indices from ``candidates`` (m x k PC scores).

    Greedy criteria start from ``M = ridge_eps * I`` and add one candidate per
    step, breaking ties toward the lowest index:

    * ``d_optimal``   maximize ``det(M + z z')``, i.e. ``z' M^-1 z``
    * ``uncertainty`` maximize the predictive variance ``z' M^-1 z``
    * ``a_optimal``   minimize ``trace((M + z z')^-1)``
    * ``g_optimal``   minimize, over the not-yet-selected candidates other than
      ``z``, the largest ``x' (M + z z')^-1 x`` (empty max counts as 0)

    With the stated definitions ``d_optimal`` and ``uncertainty`` pick the
    same sequence. Returned indices are in selection order.
    """
    if not isinstance(criterion, SelectorCriterion):
        criterion = SelectorCriterion(Criterion(criterion))
    Z = as_matrix(candidates, "candidates")
    m, k = Z.shape
    if quota > m:
        raise ValueError(f"quota {quota} exceeds the {m} candidates")
    if quota < 0:
        raise ValueError("quota must be non-negative")
    if quota == m:
        return np.arange(m)
    if criterion.kind is Criterion.RANDOM:
        return make_rng(seed).choice(m, size=quota, replace=False)

    M = criterion.ridge_eps * np.eye(k)
    available = np.ones(m, dtype=bool)
    chosen = []
    for _ in range(quota):
        Minv = np.linalg.inv(M)
        Minv = 0.5 * (Minv + Minv.T)
        scores = _greedy_scores(Z, Minv, available, criterion.kind)
        scores[~available] = -np.inf
        c = int(np.argmax(scores))
        chosen.append(c)
        available[c] = False
        M = M + np.outer(Z[c], Z[c])
    return np.asarray(chosen, dtype=np.intp)


def _greedy_scores(Z, Minv, available, kind) -> np.ndarray:
    """Per-candidate score to maximize at the current step."""
    Y = Z @ Minv                      # rows are M^-1 z
    v = np.einsum("ij,ij->i", Y, Z)   # z' M^-1 z
    if kind in (Criterion.D_OPTIMAL, Criterion.UNCERTAINTY):
        return v
    if kind is Criterion.A_OPTIMAL:
        # trace drop from the rank-one update: ||M^-1 z||^2 / (1 + z' M^-1 z)
        return np.einsum("ij,ij->i", Y, Y) / (1.0 + v)
    if kind is Criterion.G_OPTIMAL:
        return -_g_worst_case(Z, Y, v, available)
    raise ValueError(f"unknown criterion {kind}")


def _g_worst_case(Z, Y, v, available) -> np.ndarray:
    """For every candidate c: max over available r != c of x_r'(M + z_c z_c')^-1 x_r."""
    m = Z.shape[0]
    out = np.zeros(m)
    avail = np.flatnonzero(available)
    if Z.shape[1] == 1:
        # scalar case: x_r^2 m^-1 / (1 + z_c^2 m^-1); only the two largest v matter
        va = v[avail]
        order = np.argsort(-va, kind="stable")
        top1 = va[order[0]]
        top2 = va[order[1]] if len(order) > 1 else 0.0
        best_other = np.full(m, top1)
        best_other[avail[order[0]]] = top2
        return best_other / (1.0 + v)
    # cross terms W[r, c] = z_r' M^-1 z_c for available rows
    W = Z[avail] @ Y.T
    vals = v[avail, None] - W**2 / (1.0 + v)[None, :]
    vals[np.arange(len(avail)), avail] = -np.inf
    out = vals.max(axis=0) if len(avail) > 1 else np.zeros(m)
    out[~np.isfinite(out)] = 0.0
    return out


# --------------------------------------------------------------------------
# PCA-QS


def pcaqs_sample(
    X,
    retention_rate: float = 0.1,
    n_components: int | None = None,
    variance_threshold: float | None = None,
    g: int = 5,
    criterion: SelectorCriterion | str = "random",
    seed: SeedLike = 42,
    standardize: bool = True,
) -> RetentiveSubset:
    """PCA-guided quantile sampling.

    Standardizes ``X``, projects onto the top principal components (a fixed
    ``n_components`` or the smallest count reaching ``variance_threshold``,
    0.70 when neither is given), stratifies the scores into composite
    quantile groups, then draws the group quota from each group with
    ``criterion``. Indices refer to rows of the original ``X``.
    """
    _check_rate(retention_rate)
    if not isinstance(criterion, SelectorCriterion):
        criterion = SelectorCriterion(Criterion(criterion))
    X = as_matrix(X)
    n = X.shape[0]
    if n < g:
        raise ValueError(f"insufficient data for g groups: {n} rows, g={g}")
    master = _as_seed(seed)
    if n_components is None and variance_threshold is None:
        variance_threshold = 0.70

    model = fit_pca(
        X,
        rank=n_components,
        standardize_flag=standardize,
        seed=derive_seed(master, "pca"),
        variance_threshold=variance_threshold,
    )
    scores = transform(model, X)
    index = build_group_index(scores, g)

    picked = []
    manifest = {}
    for key, rows in index:
        q = group_quota(len(rows), retention_rate)
        local = design_select(
            scores[rows], q, criterion, seed=derive_seed(master, "group", *key.indices)
        )
        picked.append(rows[local])
        manifest[str(key)] = q
    indices = np.sort(np.concatenate(picked))
    return RetentiveSubset(
        indices=indices,
        method=_METHOD_TAGS[criterion.kind],
        retention_rate=retention_rate,
        seed=master,
        group_manifest=manifest,
        n_components=model.n_components,
        extra={"g": g},
    )


# --------------------------------------------------------------------------
# baselines


def srs_sample(n: int, retention_rate: float = 0.1, seed: SeedLike = 42) -> RetentiveSubset:
    """Simple random sample of ``ceil(rate * n)`` rows without replacement."""
    _check_rate(retention_rate)
    if n < 1:
        raise ValueError("n must be positive")
    master = _as_seed(seed)
    m = _target_size(n, retention_rate)
    idx = np.sort(np.random.default_rng(master).choice(n, size=m, replace=False))
    return RetentiveSubset(indices=idx, method="srs", retention_rate=retention_rate, seed=master)


def leverage_scores(X, rank: int, seed: SeedLike = None) -> np.ndarray:
    """Squared row norms of the top-``rank`` left singular vectors of ``X``."""
    U, _, _ = truncated_svd(X, rank, seed=seed)
    return np.einsum("ij,ij->i", U, U)


def default_leverage_rank(X, cap: int = 50) -> int:
    """Full column rank of ``X`` (numerical), capped at ``cap``."""
    X = as_matrix(X)
    r = int(np.linalg.matrix_rank(X)) if min(X.shape) <= 2000 else min(X.shape)
    return max(1, min(r, cap))


def weighted_sample_without_replacement(weights, size: int, rng: np.random.Generator) -> np.ndarray:
    """Successive proportional draws without replacement.

    Uses exponential keys ``E_i / w_i`` (smallest ``size`` win), which has the
    same law as drawing one item at a time with probability proportional to
    the remaining weights. Zero-weight items come last, lowest index first.
    """
    w = np.asarray(weights, dtype=float)
    keys = np.full(len(w), np.inf)
    pos = w > 0
    keys[pos] = rng.exponential(size=int(pos.sum())) / w[pos]
    return np.argsort(keys, kind="stable")[:size]


def leverage_sample(X, retention_rate: float = 0.1, rank: int | None = None,
                    seed: SeedLike = 42) -> RetentiveSubset:
    """Leverage-score sampling without replacement.

    ``weights`` hold the importance weights ``1 / (n p_i)`` of the chosen rows;
    they are recorded, not applied.
    """
    _check_rate(retention_rate)
    X = as_matrix(X)
    n = X.shape[0]
    master = _as_seed(seed)
    if rank is None:
        rank = default_leverage_rank(X)
    rank = min(rank, min(X.shape))
    lev = leverage_scores(X, rank, seed=derive_seed(master, "svd"))
    total = lev.sum()
    if not total > 0:
        raise ValueError("all leverage scores are zero")
    probs = lev / total
    m = _target_size(n, retention_rate)
    picked = weighted_sample_without_replacement(probs, m, np.random.default_rng(master))
    idx = np.sort(picked)
    with np.errstate(divide="ignore"):
        weights = np.where(probs[idx] > 0, 1.0 / (n * probs[idx]), np.inf)
    return RetentiveSubset(
        indices=idx,
        method="leverage",
        retention_rate=retention_rate,
        seed=master,
        weights=weights,
        n_components=rank,
    )


@dataclass(frozen=True)
class KMeansParams:
    n_starts: int = 1
    max_iter: int = 300
    tol: float = 1e-4
    # classical k-means++; greedy seeding chases outliers when k is large
    seeding_trials: int = 1


def coreset_sample(X, retention_rate: float = 0.1, seed: SeedLike = 42,
                   kmeans_params: KMeansParams | None = None) -> RetentiveSubset:
    """k-means coreset: the data row nearest each of ``ceil(rate * n)`` centroids.

    Weights are cluster sizes; rows nearest to several centroids appear once
    with the weights merged.
    """
    _check_rate(retention_rate)
    X = as_matrix(X)
    n = X.shape[0]
    master = _as_seed(seed)
    params = kmeans_params or KMeansParams()
    k = _target_size(n, retention_rate)
    if k == n:
        return RetentiveSubset(indices=np.arange(n), method="coreset",
                               retention_rate=retention_rate, seed=master,
                               weights=np.ones(n))
    res = kmeans(X, k, n_starts=params.n_starts, max_iter=params.max_iter,
                 tol=params.tol, seed=master, seeding_trials=params.seeding_trials)
    # nearest data row for each centroid (ties -> lowest row index)
    rep = assign_nearest(X, res.centroids)
    sizes = np.bincount(res.assignments, minlength=k).astype(float)
    rows, inverse = np.unique(rep, return_inverse=True)
    weights = np.bincount(inverse.ravel(), weights=sizes, minlength=len(rows))
    return RetentiveSubset(
        indices=rows,
        method="coreset",
        retention_rate=retention_rate,
        seed=master,
        weights=weights,
        extra={"n_centers": k},
    )
