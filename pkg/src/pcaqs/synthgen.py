"""
Seeded synthetic regression datasets.

A master seed is split into named substreams (means, weights, labels, noise,
coefficients, response noise), so changing ``n`` leaves ``beta`` and the
mixture parameters untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pcaqs._rng import derive_seed


@dataclass
class SyntheticDataset:
    X: np.ndarray
    y: np.ndarray
    beta: np.ndarray
    generator: str
    params: dict = field(default_factory=dict)
    component_labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "synthgen", name))


def _check_counts(n, p):
    if n < 1 or p < 1:
        raise ValueError(f"n and p must be positive, got n={n}, p={p}")


def gaussian_mixture(
    n: int = 10_000,
    p: int = 50,
    K: int = 5,
    mean_scale: float = 5.0,
    noise_sigma: float = 1.0,
    seed: int = 42,
) -> SyntheticDataset:
    """Mixture of ``K`` unit-covariance Gaussians with a linear response.

    ``mu_k ~ N(0, mean_scale^2 I)``, ``pi ~ Dirichlet(1_K)``,
    ``x_i ~ N(mu_{c_i}, I)``, ``beta ~ N(0, I)``, ``y = X beta + eps`` with
    ``eps ~ N(0, noise_sigma^2)``.
    """
    _check_counts(n, p)
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if mean_scale < 0 or noise_sigma < 0:
        raise ValueError("scales must be non-negative")
    means = mean_scale * _stream(seed, "means").standard_normal((K, p))
    weights = _stream(seed, "weights").dirichlet(np.ones(K))
    labels = _stream(seed, "labels").choice(K, size=n, p=weights)
    X = means[labels] + _stream(seed, "features").standard_normal((n, p))
    beta = _stream(seed, "beta").standard_normal(p)
    y = X @ beta + noise_sigma * _stream(seed, "noise").standard_normal(n)
    return SyntheticDataset(
        X=X,
        y=y,
        beta=beta,
        generator="mixture",
        params={"n": n, "p": p, "K": K, "mean_scale": mean_scale,
                "noise_sigma": noise_sigma, "seed": seed,
                "weights": weights.tolist()},
        component_labels=labels,
    )


def equicorr_linear(
    n: int = 10_000,
    p: int = 500,
    rho: float = 0.2,
    beta_sigma: float = 0.1,
    noise_sigma: float = 0.5,
    seed: int = 42,
) -> SyntheticDataset:
    """Equi-correlated Gaussian design (unit variances, correlation ``rho``).

    Rows come from the one-factor identity
    ``x = sqrt(1 - rho) e + sqrt(rho) z 1`` with ``e ~ N(0, I_p)`` and scalar
    ``z ~ N(0, 1)``, which has exactly the target covariance.
    """
    _check_counts(n, p)
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    rng = _stream(seed, "features")
    E = rng.standard_normal((n, p))
    z = rng.standard_normal(n)
    X = np.sqrt(1.0 - rho) * E + np.sqrt(rho) * z[:, None]
    beta = beta_sigma * _stream(seed, "beta").standard_normal(p)
    y = X @ beta + noise_sigma * _stream(seed, "noise").standard_normal(n)
    return SyntheticDataset(
        X=X,
        y=y,
        beta=beta,
        generator="equicorr",
        params={"n": n, "p": p, "rho": rho, "beta_sigma": beta_sigma,
                "noise_sigma": noise_sigma, "seed": seed},
    )
