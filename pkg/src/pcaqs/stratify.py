"""
Quantile stratification of principal-component scores.

Each score column is cut at its empirical ``i/g`` quantiles; a row's position
on every column forms a composite key such as ``"2-4-1"``. Intervals are
closed on the left, ``[Q_{i-1}, Q_i)``, and the top interval is unbounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from pcaqs.matrixcore import as_matrix


@dataclass(frozen=True, order=True)
class GroupKey:
    indices: tuple[int, ...]

    def __str__(self) -> str:
        return "-".join(str(i) for i in self.indices)

    @classmethod
    def parse(cls, text: str) -> "GroupKey":
        parts = text.split("-")
        if not text or not all(p.isdigit() for p in parts):
            raise ValueError(f"malformed group key {text!r}")
        return cls(tuple(int(p) for p in parts))


@dataclass(frozen=True)
class QuantileGrid:
    num_groups: int
    cuts: tuple[np.ndarray, ...]

    @property
    def n_components(self) -> int:
        return len(self.cuts)


@dataclass(frozen=True)
class GroupIndex:
    grid: QuantileGrid
    groups: Mapping[GroupKey, np.ndarray]
    total_rows: int

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self) -> Iterator[tuple[GroupKey, np.ndarray]]:
        return iter(self.groups.items())

    def sizes(self) -> dict[str, int]:
        return {str(k): len(v) for k, v in self.groups.items()}


def compute_cuts(column, g: int) -> np.ndarray:
    """The ``g - 1`` interior cut points at probabilities ``1/g, ..., (g-1)/g``.

    Linear interpolation between order statistics (the usual type-7 rule).
    """
    values = np.asarray(column, dtype=np.float64).ravel()
    if g < 2:
        raise ValueError(f"g must be at least 2, got {g}")
    if len(values) < g:
        raise ValueError(f"insufficient data for g groups: {len(values)} rows, g={g}")
    probs = np.arange(1, g) / g
    cuts = np.quantile(values, probs, method="linear")
    # interpolation can wobble by an ulp on tied data; keep the grid monotone
    return np.maximum.accumulate(cuts)


def assign_group(value, cuts) -> int | np.ndarray:
    """1-based interval index; a value equal to a cut goes to the upper interval."""
    idx = np.searchsorted(np.asarray(cuts), value, side="right") + 1
    return int(idx) if np.ndim(idx) == 0 else idx


def build_group_index(scores, g: int = 5) -> GroupIndex:
    Z = as_matrix(scores, "scores")
    n, k = Z.shape
    cuts = tuple(compute_cuts(Z[:, j], g) for j in range(k))
    labels = np.column_stack([assign_group(Z[:, j], cuts[j]) for j in range(k)])
    uniq, inverse = np.unique(labels, axis=0, return_inverse=True)
    order = np.argsort(inverse.ravel(), kind="stable")
    bounds = np.cumsum(np.bincount(inverse.ravel(), minlength=len(uniq)))[:-1]
    members = np.split(order, bounds)
    groups = {
        GroupKey(tuple(int(v) for v in row)): rows
        for row, rows in zip(uniq, members)
    }
    return GroupIndex(grid=QuantileGrid(g, cuts), groups=groups, total_rows=n)


def group_quota(group_size: int, retention_rate: float) -> int:
    """``min(ceil(rate * N_g), N_g)``.

    The product is nudged down by a relative 1e-9 before the ceiling so that
    decimal rates such as 0.07 * 100 give 7, not 8.
    """
    if not 0.0 < retention_rate <= 1.0:
        raise ValueError(f"retention rate must lie in (0, 1], got {retention_rate}")
    if group_size < 0:
        raise ValueError("group size must be non-negative")
    if group_size == 0:
        return 0
    x = retention_rate * group_size
    return min(math.ceil(x - 1e-9 * x), group_size)
