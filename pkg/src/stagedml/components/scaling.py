"""Column-wise feature scalers with frozen fit statistics.

A scaler is fitted on training data only; transforming unseen rows uses
the fitted statistics, never the new rows' own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class StandardizeScaler:
    """Per-column mean 0, population std 1. Zero-variance columns pass
    through unchanged."""

    center: np.ndarray
    scale: np.ndarray

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.center) / self.scale

    def inverse_transform(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=np.float64) * self.scale + self.center

    def stats(self) -> dict:
        return {"center": self.center.copy(), "scale": self.scale.copy()}


def fit_standardize(X: np.ndarray) -> StandardizeScaler:
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population std
    degenerate = std == 0.0
    center = np.where(degenerate, 0.0, mean)
    scale = np.where(degenerate, 1.0, std)
    return StandardizeScaler(center=center, scale=scale)


@dataclass
class MinMaxScaler:
    """Per-column [0, 1] on the fit data. Zero-range columns map every
    value to the fitted constant."""

    lo: np.ndarray
    span: np.ndarray
    constant: np.ndarray
    degenerate: np.ndarray

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        out = (rows - self.lo) / self.span
        if self.degenerate.any():
            out = out.copy()
            out[:, self.degenerate] = self.constant[self.degenerate]
        return out

    def stats(self) -> dict:
        return {"lo": self.lo.copy(), "span": self.span.copy()}


def fit_minmax(X: np.ndarray) -> MinMaxScaler:
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    degenerate = hi == lo
    span = np.where(degenerate, 1.0, hi - lo)
    return MinMaxScaler(lo=lo, span=span, constant=lo, degenerate=degenerate)


@dataclass
class QuantileRankScaler:
    """Empirical CDF ranks in [0, 1] per column.

    Fit values map to (average tie position) / (n - 1); unseen values
    interpolate linearly between fitted values and clamp at the ends.
    """

    uniques: list[np.ndarray]
    ranks: list[np.ndarray]

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        out = np.empty_like(rows)
        for j in range(rows.shape[1]):
            out[:, j] = np.interp(rows[:, j], self.uniques[j], self.ranks[j])
        return out

    def stats(self) -> dict:
        return {"uniques": [u.copy() for u in self.uniques]}


def fit_quantile_rank(X: np.ndarray) -> QuantileRankScaler:
    n = X.shape[0]
    uniques = []
    ranks = []
    for j in range(X.shape[1]):
        col = np.sort(X[:, j])
        u, start = np.unique(col, return_index=True)
        counts = np.diff(np.append(start, n))
        avg_pos = start + (counts - 1) / 2.0
        r = avg_pos / (n - 1) if n > 1 else np.full_like(avg_pos, 0.5, dtype=np.float64)
        uniques.append(u)
        ranks.append(r.astype(np.float64))
    return QuantileRankScaler(uniques=uniques, ranks=ranks)
