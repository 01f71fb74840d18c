"""Reversible instance normalization (non-affine).

Statistics are computed per window and per variate over the look-back axis,
using the population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, add_const, mul_const

DEFAULT_EPS = 1e-5


@dataclass(frozen=True)
class RevinStats:
    mu: np.ndarray     # (..., N)
    sigma: np.ndarray  # (..., N)
    eps: float = DEFAULT_EPS


def revin_normalize(x: np.ndarray, eps: float = DEFAULT_EPS) -> tuple[np.ndarray, RevinStats]:
    """Normalize ``x`` of shape ``(..., N, L)`` along its last axis."""
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError(f"expected (..., N, L) input, got shape {x.shape}")
    if x.shape[-1] < 2:
        raise ValueError("look-back length must be at least 2")
    mu = x.mean(axis=-1)
    sigma = np.sqrt(((x - mu[..., None]) ** 2).mean(axis=-1))
    x_norm = (x - mu[..., None]) / (sigma[..., None] + x.dtype.type(eps))
    return x_norm, RevinStats(mu, sigma, eps)


def revin_denormalize(y_norm, stats: RevinStats):
    """Invert :func:`revin_normalize` on forecasts of shape ``(..., N, F)``.

    Accepts a numpy array or a :class:`Tensor` (the result stays on the tape).
    """
    shape = y_norm.shape
    if tuple(shape[:-1]) != stats.mu.shape:
        raise ValueError(f"forecast shape {tuple(shape)} does not match stats for {stats.mu.shape}")
    scale = (stats.sigma + stats.eps)[..., None]
    shift = stats.mu[..., None]
    if isinstance(y_norm, Tensor):
        return add_const(mul_const(y_norm, scale), shift)
    y_norm = np.asarray(y_norm)
    return (y_norm * scale.astype(y_norm.dtype) + shift.astype(y_norm.dtype)).astype(y_norm.dtype)
