"""End-to-end gradient check of the full model against central differences (f64)."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import GateformerParams, ModelConfig, forward, init_params
from .training import mse_loss

TINY = ModelConfig(lookback=32, horizon=8, patch_len=8, d_model=16, n_heads=4,
                   n_temporal_blocks=1, n_variate_blocks=1)
SIZES = {"tiny": (TINY, 3)}


@dataclass
class GroupCheck:
    group: str
    max_rel_err: float
    n_checked: int
    passed: bool


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from dominating."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def _problem(config: ModelConfig, n_variates: int, batch: int, seed: int):
    rng = np.random.default_rng(seed)
    params = init_params(config, seed, np.float64)
    # move biases and norm affines off their init values so every path carries signal
    for name, t in params.items():
        if t.ndim == 1 or name.endswith(".pos.embedding"):
            t.data += 0.1 * rng.normal(size=t.shape)
    t_axis = np.arange(config.lookback + config.horizon)
    base = np.sin(2 * np.pi * t_axis / 11.0)[None, None] * rng.uniform(0.5, 2, (batch, n_variates, 1))
    series = base + 0.3 * rng.normal(size=base.shape)
    return params, series[..., :config.lookback], series[..., config.lookback:]


def analytic_grads(params: GateformerParams, config: ModelConfig, x: np.ndarray,
                   y: np.ndarray) -> "OrderedDict[str, np.ndarray]":
    for t in params.tensors():
        t.grad = None
    T.reset_tape()
    loss = mse_loss(forward(x, params, config), y)
    T.backward(loss)
    return OrderedDict((n, t.grad if t.grad is not None else np.zeros_like(t.data))
                       for n, t in params.items())


def gradcheck(config: ModelConfig = TINY, n_variates: int = 3, batch: int = 2, seed: int = 0,
              h: float = 1e-5, tol: float = 1e-4, max_per_param: int | None = None,
              corrupt_group: str | None = None) -> list[GroupCheck]:
    """Compare backprop gradients with central differences, one result per parameter group.

    ``max_per_param`` limits how many entries of each array are probed (a
    seeded sample that always includes the largest-magnitude gradient);
    ``None`` probes every entry. ``corrupt_group`` perturbs that group's
    analytic gradient and exists to exercise the failure path.
    """
    params, x, y = _problem(config, n_variates, batch, seed)
    grads = analytic_grads(params, config, x, y)
    groups = params.groups()
    if corrupt_group is not None:
        if corrupt_group not in groups:
            raise KeyError(f"unknown parameter group {corrupt_group!r}")
        first = groups[corrupt_group][0]
        # the largest entry is always probed, even when sampling
        g = grads[first] = grads[first].copy()
        i = int(np.argmax(np.abs(g)))
        g.reshape(-1)[i] += 1e-2 * (1.0 + abs(g.reshape(-1)[i]))

    def loss_value() -> float:
        with T.no_grad():
            return mse_loss(forward(x, params, config), y).item()

    pick = np.random.default_rng(seed + 1)
    errs: dict[str, list[float]] = {}
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        g = grads[name].reshape(-1)
        if max_per_param is None or flat.size <= max_per_param:
            idx = np.arange(flat.size)
        else:
            idx = pick.choice(flat.size, size=max_per_param - 1, replace=False)
            idx = np.unique(np.append(idx, np.argmax(np.abs(g))))
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            numeric[j] = (up - down) / (2 * h)
        errs[name] = list(relative_error(g[idx], numeric))

    out = []
    for group, names in groups.items():
        vals = [e for n in names for e in errs[n]]
        worst = float(max(vals))
        out.append(GroupCheck(group, worst, len(vals), worst < tol))
    return out
