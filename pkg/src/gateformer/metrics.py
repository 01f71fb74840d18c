"""Error accumulation over forecast windows.

Aggregates average over every (window, variate, step) element. Each window
contributes the same number of elements, so the aggregate also equals the
mean of per-window metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ForecastReport:
    mse: float
    mae: float
    mse_per_step: np.ndarray
    mae_per_step: np.ndarray
    mse_per_variate: np.ndarray
    mae_per_variate: np.ndarray
    n_windows: int
    predictions: np.ndarray | None = None  # (W, N, F)
    targets: np.ndarray | None = None
    origins: list[int] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.mse_per_step)


class MetricAccumulator:
    def __init__(self, keep_series: bool = False):
        self.keep_series = keep_series
        self._sq = None
        self._abs = None
        self.n_windows = 0
        self._pred: list[np.ndarray] = []
        self._true: list[np.ndarray] = []

    def update(self, y_hat: np.ndarray, y: np.ndarray) -> None:
        y_hat = np.asarray(y_hat)
        y = np.asarray(y)
        if y_hat.shape != y.shape:
            raise ValueError(f"prediction shape {y_hat.shape} != target shape {y.shape}")
        if y.ndim == 2:
            y_hat, y = y_hat[None], y[None]
        diff = y_hat.astype(np.float64) - y.astype(np.float64)
        sq = (diff * diff).sum(axis=0)
        ab = np.abs(diff).sum(axis=0)
        if self._sq is None:
            self._sq, self._abs = sq, ab
        else:
            self._sq += sq
            self._abs += ab
        self.n_windows += y.shape[0]
        if self.keep_series:
            self._pred.append(np.array(y_hat))
            self._true.append(np.array(y))

    def report(self) -> ForecastReport:
        if self._sq is None:
            raise ValueError("no windows were accumulated")
        w = self.n_windows
        n, f = self._sq.shape
        rep = ForecastReport(
            mse=float(self._sq.sum() / (w * n * f)),
            mae=float(self._abs.sum() / (w * n * f)),
            mse_per_step=self._sq.sum(axis=0) / (w * n),
            mae_per_step=self._abs.sum(axis=0) / (w * n),
            mse_per_variate=self._sq.sum(axis=1) / (w * f),
            mae_per_variate=self._abs.sum(axis=1) / (w * f),
            n_windows=w,
        )
        if self.keep_series:
            rep.predictions = np.concatenate(self._pred)
            rep.targets = np.concatenate(self._true)
        return rep
