"""Figures written next to the CSV reports."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path: str | os.PathLike) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return os.fspath(path)


def plot_forecast(x: np.ndarray, y_true: np.ndarray, y_pred: np.ndarray, path: str | os.PathLike,
                  variate_names: Sequence[str] | None = None, max_variates: int = 6) -> str:
    """Look-back, target and forecast for one window; one panel per variate."""
    n = min(y_true.shape[0], max_variates)
    L, F = x.shape[-1], y_true.shape[-1]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, figsize=(7, 1.6 * n + 0.4), sharex=True, squeeze=False)
        past = np.arange(-L, 0)
        fut = np.arange(F)
        for i, ax in enumerate(axes[:, 0]):
            ax.plot(past, x[i], color="0.45", lw=1, label="input")
            ax.plot(fut, y_true[i], color="k", lw=1.2, label="ground truth")
            ax.plot(fut, y_pred[i], color="tab:red", lw=1.2, label="forecast")
            ax.axvline(-0.5, color="0.7", lw=0.8, ls="--")
            ax.set_ylabel(variate_names[i] if variate_names is not None else f"v{i}")
        axes[0, 0].legend(loc="upper left", ncol=3, frameon=False)
        axes[-1, 0].set_xlabel("time step relative to forecast origin")
        return _save(fig, path)


def plot_history(epochs: Sequence[int], train_loss: Sequence[float], val_loss: Sequence[float],
                 path: str | os.PathLike, best_epoch: int | None = None) -> str:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(epochs, train_loss, marker="o", ms=3, label="train")
        ax.plot(epochs, val_loss, marker="s", ms=3, label="validation")
        if best_epoch is not None and best_epoch > 0:
            ax.axvline(best_epoch, color="0.6", ls=":", lw=1, label=f"best (epoch {best_epoch})")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_ablation(variants: Sequence[str], mse: Sequence[float], mae: Sequence[float],
                  path: str | os.PathLike, ref_mse: Sequence[float | None] | None = None,
                  title: str = "") -> str:
    """Grouped bars of MSE/MAE per variant; reference MSE drawn as ticks when known."""
    k = np.arange(len(variants))
    w = 0.38
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.bar(k - w / 2, mse, w, label="MSE")
        ax.bar(k + w / 2, mae, w, label="MAE")
        if ref_mse is not None:
            pts = [(i, r) for i, r in enumerate(ref_mse) if r is not None]
            if pts:
                ax.scatter([i - w / 2 for i, _ in pts], [r for _, r in pts], marker="_", s=300,
                           color="k", zorder=3, label="published MSE")
        ax.set_xticks(k)
        ax.set_xticklabels(variants, rotation=15)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)
