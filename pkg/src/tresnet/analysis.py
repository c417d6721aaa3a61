"""Correlation, relevant-VM selection, classical decomposition and Gaussian KDE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MAX_CHANNEL, Deployment
from .errors import (
    BandwidthError,
    InsufficientDataError,
    UndefinedCorrelationError,
    UsageError,
)


@dataclass
class Decomposition:
    """Additive split ``observed = trend + seasonal + residual``.

    ``trend`` and ``residual`` are NaN near both ends where the centered
    moving average is undefined.
    """

    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def to_rows(self):
        for i in range(self.observed.size):
            yield i, self.observed[i], self.trend[i], self.seasonal[i], self.residual[i]


@dataclass
class CorrelationMatrix:
    entries: np.ndarray  # NaN where a series is constant
    defined: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def pairwise(self) -> np.ndarray:
        """Defined upper-triangle coefficients (each unordered pair once)."""
        iu = np.triu_indices(self.n, k=1)
        vals = self.entries[iu]
        return vals[self.defined[iu]]


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError("pearson needs two 1-D sequences of equal length")
    if x.size < 2:
        raise UsageError("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def correlation_matrix(series) -> CorrelationMatrix:
    """Pairwise Pearson matrix over the rows of ``series`` (N, T)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    entries = np.full((n, n), np.nan)
    defined = np.zeros((n, n), dtype=bool)
    constant = [np.ptp(row) == 0 for row in x]
    for i in range(n):
        if constant[i]:
            continue
        entries[i, i] = 1.0
        defined[i, i] = True
        for j in range(i + 1, n):
            if constant[j]:
                continue
            entries[i, j] = entries[j, i] = pearson(x[i], x[j])
            defined[i, j] = defined[j, i] = True
    return CorrelationMatrix(entries, defined)


def top_k_relevant(deployment: Deployment, target_index: int, k: int,
                   end: int | None = None, channel: int = MAX_CHANNEL) -> list[int]:
    """The ``k`` peers most Pearson-correlated with the target VM.

    Correlation uses ``channel`` over ``[0, end)`` (the training range).
    Peers with an undefined correlation rank after every defined one; ties go
    to the lower index. Result is in descending-correlation order.
    """
    n = len(deployment)
    if not 0 <= target_index < n:
        raise UsageError(f"target index {target_index} out of range for {n} VMs")
    if k < 0 or k > n - 1:
        raise UsageError(f"k={k} must lie in [0, {n - 1}]")
    if k == 0:
        return []
    target = deployment.vms[target_index].values[:end, channel]
    ranked = []
    for j, vm in enumerate(deployment.vms):
        if j == target_index:
            continue
        try:
            r = pearson(target, vm.values[:end, channel])
            ranked.append((0, -r, j))
        except UndefinedCorrelationError:
            ranked.append((1, 0.0, j))
    ranked.sort()
    return [j for _, _, j in ranked[:k]]


def seasonal_decompose(series, period: int) -> Decomposition:
    """Classical additive decomposition with a centered moving-average trend.

    Even periods use the 2 x period filter with half weights at both ends.
    """
    x = np.asarray(series, dtype=np.float64)
    if period < 1:
        raise UsageError("period must be positive")
    n = x.size
    if n < 2 * period:
        raise InsufficientDataError(f"need at least {2 * period} points, got {n}")
    if period % 2 == 0:
        weights = np.r_[0.5, np.ones(period - 1), 0.5] / period
    else:
        weights = np.ones(period) / period
    half = period // 2
    trend = np.full(n, np.nan)
    trend[half:n - half] = np.convolve(x, weights, mode="valid")

    detrended = x - trend
    phase = np.arange(n) % period
    means = np.array([np.nanmean(detrended[phase == p]) for p in range(period)])
    means -= means.mean()
    seasonal = means[phase]
    residual = detrended - seasonal
    return Decomposition(x, trend, seasonal, residual, period)


def silverman_bandwidth(samples) -> float:
    """``0.9 * min(std, IQR / 1.34) * n ** (-1/5)``; IQR of zero falls back to std."""
    x = np.asarray(samples, dtype=np.float64)
    if np.unique(x).size < 2:
        raise BandwidthError("automatic bandwidth needs at least two distinct samples")
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 0.9 * spread * x.size ** (-0.2)


def gaussian_kde(samples, eval_points, bandwidth: float | None = None) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise UsageError("KDE needs at least one sample")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise UsageError("bandwidth must be positive")
    pts = np.asarray(eval_points, dtype=np.float64)
    z = (pts.reshape(-1, 1) - x.reshape(1, -1)) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return dens.reshape(pts.shape)


def correlation_density(series, grid_points: int = 100, bandwidth: float | None = None):
    """KDE of pairwise correlations on an evenly spaced grid over [-1, 1]."""
    corr = correlation_matrix(series).pairwise()
    grid = np.linspace(-1.0, 1.0, grid_points)
    return grid, gaussian_kde(corr, grid, bandwidth), corr
