"""
Dense-matrix helpers: validation, standardization, randomized truncated SVD,
PCA fitting and least squares.

Matrices are plain 2-D ``float64`` numpy arrays. Every public entry point runs
them through :func:`as_matrix`, which enforces shape and finiteness.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from pcaqs._rng import SeedLike, make_rng


class DegenerateInputError(ValueError):
    """Raised when the data carry no usable variation."""


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite, C-ordered 2-D float64 array (copy only when needed).

    A fixed memory layout keeps reductions bit-reproducible regardless of how
    the caller sliced its input.
    """
    A = np.ascontiguousarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size and not np.all(np.isfinite(A)):
        bad = np.argwhere(~np.isfinite(A))[0]
        raise ValueError(f"{name} has a non-finite entry at row {bad[0]}, column {bad[1]}")
    return A


@dataclass(frozen=True)
class ScalingParams:
    means: np.ndarray
    stddevs: np.ndarray
    dropped_columns: tuple[int, ...] = ()
    n_features_in: int = 0

    @property
    def kept_columns(self) -> np.ndarray:
        keep = np.ones(self.n_features_in, dtype=bool)
        keep[list(self.dropped_columns)] = False
        return np.flatnonzero(keep)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.n_features_in:
            raise ValueError(
                f"expected {self.n_features_in} columns, got {X.shape[1]}"
            )
        return (X[:, self.kept_columns] - self.means) / self.stddevs


def _scaling(X: np.ndarray, scale: bool) -> ScalingParams:
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows to standardize")
    means = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    # exact zero-variance detection; scale-aware to catch rounding residue
    tiny = np.abs(means) * 1e-13 + np.finfo(float).tiny
    dropped = np.flatnonzero(sd <= tiny)
    if len(dropped) == p:
        raise DegenerateInputError("degenerate input: every column has zero variance")
    if len(dropped):
        warnings.warn(f"dropping zero-variance columns {dropped.tolist()}", stacklevel=3)
    keep = np.setdiff1d(np.arange(p), dropped)
    stddevs = sd[keep] if scale else np.ones(len(keep))
    return ScalingParams(
        means=means[keep],
        stddevs=stddevs,
        dropped_columns=tuple(int(j) for j in dropped),
        n_features_in=p,
    )


def standardize(X) -> tuple[np.ndarray, ScalingParams]:
    """Center and scale columns to mean 0, sample sd 1 (ddof=1).

    Zero-variance columns are removed from the output and listed in
    ``ScalingParams.dropped_columns``.
    """
    X = as_matrix(X)
    params = _scaling(X, scale=True)
    return params.apply(X), params


def truncated_svd(
    X,
    rank: int,
    oversample: int = 10,
    power_iterations: int = 2,
    seed: SeedLike = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Randomized rank-``rank`` SVD via a Gaussian range finder.

    Returns ``U`` (n x rank), ``S`` (rank,) and ``V`` (p x rank) such that
    ``X ~= U @ diag(S) @ V.T``. When ``rank + oversample`` covers the smaller
    dimension the sketch spans the whole range and the result is exact up to
    rounding, so a dense SVD is used directly.
    """
    X = as_matrix(X)
    n, p = X.shape
    if not 1 <= rank <= min(n, p):
        raise ValueError(f"rank must lie in [1, {min(n, p)}], got {rank}")
    if oversample < 0 or power_iterations < 0:
        raise ValueError("oversample and power_iterations must be non-negative")

    ell = rank + oversample
    if ell >= min(n, p):
        U, S, Vt = la.svd(X, full_matrices=False, lapack_driver="gesdd")
        U, S, V = U[:, :rank], S[:rank], Vt[:rank].T
        return _fix_signs(U, S, V)

    rng = make_rng(seed)
    Omega = rng.standard_normal((p, ell))
    Q, _ = la.qr(X @ Omega, mode="economic")
    for _ in range(power_iterations):
        Q, _ = la.qr(X.T @ Q, mode="economic")
        Q, _ = la.qr(X @ Q, mode="economic")
    B = Q.T @ X
    Ub, S, Vt = la.svd(B, full_matrices=False, lapack_driver="gesdd")
    U = Q @ Ub[:, :rank]
    return _fix_signs(U, S[:rank], Vt[:rank].T)


def _fix_signs(U, S, V):
    # deterministic orientation: largest-magnitude entry of each V column positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, S, V * signs


@dataclass(frozen=True)
class PcaModel:
    scaling: ScalingParams
    components: np.ndarray
    singular_values: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    total_variance: float
    fitted_n: int
    standardized: bool = True

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    def truncate(self, k: int) -> "PcaModel":
        if not 1 <= k <= self.n_components:
            raise ValueError(f"cannot truncate {self.n_components} components to {k}")
        return PcaModel(
            scaling=self.scaling,
            components=self.components[:, :k],
            singular_values=self.singular_values[:k],
            explained_variance=self.explained_variance[:k],
            explained_variance_ratio=self.explained_variance_ratio[:k],
            total_variance=self.total_variance,
            fitted_n=self.fitted_n,
            standardized=self.standardized,
        )


def fit_pca(
    X,
    rank: int | None = None,
    standardize_flag: bool = True,
    seed: SeedLike = None,
    variance_threshold: float | None = None,
    oversample: int = 10,
    power_iterations: int = 2,
) -> PcaModel:
    """Fit a PCA model on ``X``.

    Exactly one of ``rank`` or ``variance_threshold`` selects the number of
    components. With a threshold the full spectrum is computed and cut at the
    smallest k whose cumulative explained-variance ratio reaches it.

    Component variances are ``s_j**2 / (n - 1)``; ratios are taken against the
    trace of the (standardized) sample covariance.
    """
    X = as_matrix(X)
    n = X.shape[0]
    scaling = _scaling(X, scale=standardize_flag)
    Xs = scaling.apply(X)
    full_rank = min(Xs.shape)
    if variance_threshold is not None:
        if rank is not None:
            raise ValueError("pass either rank or variance_threshold, not both")
        target = full_rank
    else:
        target = 2 if rank is None else rank
        if not 1 <= target <= full_rank:
            raise ValueError(f"rank must lie in [1, {full_rank}], got {target}")

    _, S, V = truncated_svd(Xs, target, oversample, power_iterations, seed)
    total = float(np.sum(Xs * Xs) / (n - 1))
    variances = S**2 / (n - 1)
    model = PcaModel(
        scaling=scaling,
        components=V,
        singular_values=S,
        explained_variance=variances,
        explained_variance_ratio=variances / total,
        total_variance=total,
        fitted_n=n,
        standardized=standardize_flag,
    )
    if variance_threshold is not None:
        k = select_rank_by_variance(model.explained_variance_ratio, variance_threshold)
        model = model.truncate(k)
    return model


def transform(model: PcaModel, X) -> np.ndarray:
    """Project rows of ``X`` onto the model's principal axes."""
    return model.scaling.apply(X) @ model.components


def select_rank_by_variance(explained_variance_ratio, threshold: float) -> int:
    ratios = np.asarray(explained_variance_ratio, dtype=float).ravel()
    if ratios.size == 0:
        raise ValueError("explained_variance_ratio is empty")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    cum = np.cumsum(ratios)
    # tolerance absorbs rounding when the ratios sum to exactly the threshold
    hits = np.flatnonzero(cum >= threshold - 1e-12)
    return int(hits[0] + 1) if hits.size else int(ratios.size)


@dataclass
class OlsFit:
    coefficients: np.ndarray
    intercept: float
    ridge_used: float
    residual_mse: float
    r_squared: float
    degenerate: bool = False
    notes: list[str] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return as_matrix(X) @ self.coefficients + self.intercept


_FALLBACK_RIDGE = 1e-8


def ols_fit(X, y, ridge: float = 0.0, fit_intercept: bool = True) -> OlsFit:
    """Least squares (optionally ridge) via an orthogonal factorization.

    Minimizes ``||X b + c - y||^2 + ridge * ||b||^2``; the intercept ``c`` is
    unpenalized. A rank-deficient design with ``ridge == 0`` falls back to
    ridge 1e-8, recorded in ``ridge_used``.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if n < 1 or len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)} entries")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")

    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), float(y.mean())
        Xc, yc = X - x_mean, y - y_mean
    else:
        x_mean, y_mean = np.zeros(p), 0.0
        Xc, yc = X, y

    notes = []
    ridge_used = float(ridge)
    beta = None
    if ridge_used == 0.0:
        Q, R = la.qr(Xc, mode="economic")
        d = np.abs(np.diag(R))
        if len(d) == p and d.size and d.min() > max(n, p) * np.finfo(float).eps * d.max():
            beta = la.solve_triangular(R, Q.T @ yc)
        else:
            ridge_used = _FALLBACK_RIDGE
            notes.append("rank-deficient design: ridge fallback 1e-08")
    if beta is None:
        aug = np.vstack([Xc, math.sqrt(ridge_used) * np.eye(p)])
        rhs = np.concatenate([yc, np.zeros(p)])
        Q, R = la.qr(aug, mode="economic")
        beta = la.solve_triangular(R, Q.T @ rhs)

    intercept = y_mean - float(x_mean @ beta)
    resid = y - (X @ beta + intercept)
    sse = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    degenerate = sst == 0.0
    r2 = 0.0 if degenerate else 1.0 - sse / sst
    return OlsFit(
        coefficients=beta,
        intercept=intercept,
        ridge_used=ridge_used,
        residual_mse=sse / n,
        r_squared=r2,
        degenerate=degenerate,
        notes=notes,
    )
