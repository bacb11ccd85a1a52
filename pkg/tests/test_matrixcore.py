import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcaqs.matrixcore import (
    DegenerateInputError,
    as_matrix,
    fit_pca,
    ols_fit,
    select_rank_by_variance,
    standardize,
    transform,
    truncated_svd,
)


def test_as_matrix_rejects_non_finite():
    X = np.ones((3, 2))
    X[1, 1] = np.nan
    with pytest.raises(ValueError, match="row 1, column 1"):
        as_matrix(X)


# ---------------------------------------------------------------- standardize

def test_standardize_simple_column():
    Xs, params = standardize(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(Xs.ravel(), [-1.0, 0.0, 1.0])
    assert params.means[0] == 2.0 and params.stddevs[0] == 1.0


def test_standardize_drops_constant_column():
    X = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    with pytest.warns(UserWarning, match="zero-variance"):
        Xs, params = standardize(X)
    assert Xs.shape == (3, 1)
    assert params.dropped_columns == (1,)
    assert params.kept_columns.tolist() == [0]


def test_standardize_random_moments():
    X = np.random.default_rng(0).normal(3.0, 2.0, size=(100, 10))
    Xs, _ = standardize(X)
    assert np.max(np.abs(Xs.mean(axis=0))) <= 1e-10
    assert np.max(np.abs(Xs.std(axis=0, ddof=1) - 1.0)) <= 1e-10


def test_standardize_errors():
    with pytest.raises(DegenerateInputError, match="degenerate input"):
        standardize(np.full((4, 3), 2.5))
    with pytest.raises(ValueError):
        standardize(np.array([[1.0, np.inf], [2.0, 3.0]]))
    with pytest.raises(ValueError, match="at least 2 rows"):
        standardize(np.ones((1, 3)))


def test_scaling_apply_checks_width():
    _, params = standardize(np.random.default_rng(1).normal(size=(20, 4)))
    with pytest.raises(ValueError, match="expected 4 columns"):
        params.apply(np.zeros((2, 3)))


# ---------------------------------------------------------------- truncated SVD

def test_svd_identity():
    _, S, _ = truncated_svd(np.eye(5), 3, seed=0)
    np.testing.assert_allclose(S, [1.0, 1.0, 1.0], atol=1e-12)


def test_svd_diagonal():
    _, S, V = truncated_svd(np.array([[3.0, 0.0], [0.0, 2.0]]), 2, seed=0)
    np.testing.assert_allclose(S, [3.0, 2.0])
    np.testing.assert_allclose(np.abs(V), np.eye(2), atol=1e-12)


def test_svd_matches_eigensolve_oracle():
    X = np.random.default_rng(2).normal(size=(50, 8))
    _, S, _ = truncated_svd(X, 8, seed=3)
    oracle = np.sqrt(np.sort(np.linalg.eigvalsh(X.T @ X))[::-1])
    np.testing.assert_allclose(S, oracle, rtol=1e-6)


def test_svd_randomized_branch_near_optimal():
    # low-rank signal plus noise, large enough that the range finder is used
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 5)) @ rng.normal(size=(5, 80)) * 3 + 0.1 * rng.normal(size=(300, 80))
    rank = 5
    U, S, V = truncated_svd(X, rank, seed=5)
    s_all = np.linalg.svd(X, compute_uv=False)
    best = np.sqrt(np.sum(s_all[rank:] ** 2))
    err = np.linalg.norm(X - U @ np.diag(S) @ V.T)
    assert err <= best * 1.05
    assert np.max(np.abs(U.T @ U - np.eye(rank))) <= 1e-8
    assert np.max(np.abs(V.T @ V - np.eye(rank))) <= 1e-8


def test_svd_rank_out_of_range():
    X = np.ones((4, 3))
    for bad in (0, 4):
        with pytest.raises(ValueError, match="rank must lie"):
            truncated_svd(X, bad)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 50),
    p=st.integers(1, 8),
    seed=st.integers(0, 2**32 - 1),
    data=st.data(),
)
def test_svd_properties(n, p, seed, data):
    X = np.random.default_rng(seed).normal(size=(n, p))
    rank = data.draw(st.integers(1, min(n, p)))
    U, S, V = truncated_svd(X, rank, seed=seed)
    assert U.shape == (n, rank) and V.shape == (p, rank)
    assert np.all(np.diff(S) <= 1e-12)
    assert np.max(np.abs(V.T @ V - np.eye(rank))) <= 1e-8
    assert np.max(np.abs(U.T @ U - np.eye(rank))) <= 1e-8
    s_all = np.linalg.svd(X, compute_uv=False)
    best = np.sqrt(np.sum(s_all[rank:] ** 2))
    err = np.linalg.norm(X - U @ np.diag(S) @ V.T)
    assert err <= best * 1.05 + 1e-9


# ---------------------------------------------------------------- PCA

def test_pca_full_spectrum_sums_to_p():
    X = np.random.default_rng(6).normal(size=(40, 6))
    model = fit_pca(X, rank=6, seed=0)
    assert model.total_variance == pytest.approx(6.0, rel=1e-12)
    assert model.explained_variance.sum() == pytest.approx(6.0, rel=1e-10)
    assert model.explained_variance_ratio.sum() == pytest.approx(1.0, rel=1e-10)


def test_pca_dominant_direction():
    rng = np.random.default_rng(7)
    direction = rng.normal(size=10)
    X = rng.normal(size=(500, 1)) * direction + 1e-3 * rng.normal(size=(500, 10))
    # unstandardized: scaling would inflate the noise on near-zero loadings
    model = fit_pca(X, rank=3, seed=1, standardize_flag=False)
    assert model.explained_variance_ratio[0] > 0.99


def test_pca_deterministic():
    X = np.random.default_rng(8).normal(size=(200, 30))
    a = fit_pca(X, rank=4, seed=11)
    b = fit_pca(X, rank=4, seed=11)
    assert np.array_equal(a.components, b.components)
    assert np.array_equal(a.singular_values, b.singular_values)


def test_pca_invariants():
    X = np.random.default_rng(9).normal(size=(300, 40)) @ np.diag(np.linspace(3, 0.1, 40))
    model = fit_pca(X, rank=10, seed=2)
    V = model.components
    assert np.max(np.abs(V.T @ V - np.eye(10))) <= 1e-8
    assert np.all(np.diff(model.singular_values) <= 0)
    assert np.all((model.explained_variance_ratio >= 0) & (model.explained_variance_ratio <= 1))


def test_pca_variance_threshold_picks_smallest_k():
    X = np.random.default_rng(10).normal(size=(500, 8)) @ np.diag([5, 4, 3, 1, 1, 0.5, 0.2, 0.1])
    model = fit_pca(X, variance_threshold=0.9, seed=0)
    full = fit_pca(X, rank=8, seed=0)
    cum = np.cumsum(full.explained_variance_ratio)
    assert model.n_components == int(np.argmax(cum >= 0.9) + 1)
    with pytest.raises(ValueError):
        fit_pca(X, rank=2, variance_threshold=0.5)


def test_transform_fit_data_is_us():
    X = np.random.default_rng(12).normal(size=(60, 7))
    model = fit_pca(X, rank=7, seed=0)
    Xs, _ = standardize(X)
    U, S, _ = truncated_svd(Xs, 7, seed=0)
    np.testing.assert_allclose(transform(model, X), U * S, atol=1e-8)


def test_transform_scores_uncorrelated_and_variance():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(2000, 6)) @ rng.normal(size=(6, 6))
    model = fit_pca(X, rank=4, seed=0)
    Z = transform(model, X)
    C = np.corrcoef(Z, rowvar=False)
    assert np.max(np.abs(C - np.eye(4))) <= 0.05
    np.testing.assert_allclose(Z.var(axis=0, ddof=1), model.explained_variance, rtol=0.05)


def test_transform_mean_row_maps_to_origin():
    X = np.random.default_rng(14).normal(size=(50, 5))
    model = fit_pca(X, rank=3, seed=0)
    z = transform(model, X.mean(axis=0, keepdims=True))
    assert np.max(np.abs(z)) <= 1e-12


def test_transform_column_mismatch():
    model = fit_pca(np.random.default_rng(15).normal(size=(30, 4)), rank=2, seed=0)
    with pytest.raises(ValueError):
        transform(model, np.zeros((3, 5)))


def test_pca_handles_dropped_columns():
    rng = np.random.default_rng(16)
    X = np.column_stack([rng.normal(size=100), np.full(100, 7.0), rng.normal(size=100)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit_pca(X, rank=2, seed=0)
    assert model.components.shape == (2, 2)
    assert transform(model, X).shape == (100, 2)


# ---------------------------------------------------------------- rank selection

@pytest.mark.parametrize("threshold, expected", [(0.7, 2), (0.95, 3), (0.5, 1), (1.0, 3)])
def test_select_rank_examples(threshold, expected):
    assert select_rank_by_variance([0.5, 0.3, 0.2], threshold) == expected


def test_select_rank_single_and_unreached():
    assert select_rank_by_variance([1.0], 0.7) == 1
    assert select_rank_by_variance([0.2, 0.1], 0.9) == 2
    with pytest.raises(ValueError):
        select_rank_by_variance([], 0.7)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20), st.floats(0.01, 1.0))
def test_select_rank_is_smallest(ratios, threshold):
    k = select_rank_by_variance(ratios, threshold)
    cum = np.cumsum(ratios)
    assert 1 <= k <= len(ratios)
    if k < len(ratios) or cum[-1] >= threshold - 1e-12:
        assert cum[k - 1] >= threshold - 1e-12
    if k > 1:
        assert cum[k - 2] < threshold - 1e-12


# ---------------------------------------------------------------- OLS

def test_ols_noiseless_line():
    x = np.arange(10.0).reshape(-1, 1)
    fit = ols_fit(x, 2.0 * x.ravel())
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-12)
    assert fit.residual_mse <= 1e-16
    assert fit.r_squared == pytest.approx(1.0)


def test_ols_constant_response():
    X = np.random.default_rng(17).normal(size=(20, 3))
    fit = ols_fit(X, np.full(20, 4.0))
    assert fit.degenerate
    assert fit.r_squared == 0.0
    assert fit.residual_mse == pytest.approx(0.0, abs=1e-20)


def test_ols_matches_pinv_oracle():
    rng = np.random.default_rng(18)
    X = rng.normal(size=(200, 5))
    y = X @ rng.normal(size=5) + 0.3 + rng.normal(size=200)
    fit = ols_fit(X, y)
    design = np.column_stack([X, np.ones(200)])
    oracle = np.linalg.pinv(design) @ y
    np.testing.assert_allclose(fit.coefficients, oracle[:5], atol=1e-8)
    assert fit.intercept == pytest.approx(oracle[5], abs=1e-8)
    assert fit.ridge_used == 0.0
    resid = design @ np.append(fit.coefficients, fit.intercept) - y
    assert np.linalg.norm(design.T @ resid) <= 1e-6 * np.linalg.norm(design.T @ y)


def test_ols_no_intercept_normal_equations():
    rng = np.random.default_rng(19)
    X = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    fit = ols_fit(X, y, fit_intercept=False)
    assert fit.intercept == 0.0
    assert np.linalg.norm(X.T @ (X @ fit.coefficients - y)) <= 1e-6 * np.linalg.norm(X.T @ y)


def test_ols_rank_deficient_falls_back_to_ridge():
    rng = np.random.default_rng(20)
    x = rng.normal(size=(30, 1))
    X = np.hstack([x, 2 * x])
    fit = ols_fit(X, x.ravel())
    assert fit.ridge_used == 1e-8
    assert fit.notes
    assert np.all(np.isfinite(fit.coefficients))
    assert fit.residual_mse < 1e-6


def test_ols_ridge_minimizes_penalized_objective():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    lam = 2.5
    fit = ols_fit(X, y, ridge=lam, fit_intercept=False)
    oracle = np.linalg.solve(X.T @ X + lam * np.eye(3), X.T @ y)
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-10)


def test_ols_shape_errors():
    with pytest.raises(ValueError):
        ols_fit(np.ones((3, 2)), np.ones(4))
    with pytest.raises(ValueError):
        ols_fit(np.ones((3, 2)), np.ones(3), ridge=-1.0)
