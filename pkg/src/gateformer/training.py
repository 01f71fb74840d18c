"""MSE training with Adam, early stopping and optional variate subsampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .data import TimeSeriesDataset, batch, stack
from .errors import ConfigError, TrainingError
from .metrics import MetricAccumulator
from .model import GateformerParams, ModelConfig, forward, init_params, predict
from .optim import AdamState, adam_step
from .tensor import NonFiniteError, Tensor

log = logging.getLogger(__name__)

LEARNING_RATES = (1e-4, 5e-4, 1e-3)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    variate_sample_ratio: float = 1.0
    eval_batch_size: int = 64

    def __post_init__(self):
        if not 0.0 < self.variate_sample_ratio <= 1.0:
            raise ConfigError(f"variate_sample_ratio must lie in (0, 1], got {self.variate_sample_ratio}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


def n_sampled_variates(n: int, ratio: float) -> int:
    # the epsilon keeps e.g. 0.2 * 100 from rounding up to 21
    return max(1, min(n, math.ceil(ratio * n - 1e-9)))


def mse_loss(y_hat: Tensor, y) -> Tensor:
    """Mean squared error over all elements."""
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=y_hat.dtype))
    if y.shape != y_hat.shape:
        raise T.ShapeError(f"mse_loss: prediction {y_hat.shape} vs target {y.shape}")
    return T.mean_all(T.square(T.sub(y_hat, y)))


class EarlyStopping:
    """Stops once the monitored loss fails to strictly decrease ``patience`` times in a row."""

    def __init__(self, patience: int = 3):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, loss: float, epoch: int) -> bool:
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    improved: bool
    n_batches: int
    min_variates: int
    max_variates: int


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    params: GateformerParams
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        return self.checkpoint.epoch


def split_mse(params: GateformerParams, config: ModelConfig, dataset: TimeSeriesDataset,
              split: str = "val", batch_size: int = 64) -> float:
    acc = MetricAccumulator()
    for x, y in dataset.iter_arrays(split, batch_size):
        acc.update(predict(x, params, config), y)
    return acc.report().mse


def train(model_config: ModelConfig, train_config: TrainConfig, dataset: TimeSeriesDataset, *,
          init: GateformerParams | Checkpoint | None = None,
          on_batch: Callable[[int, int, np.ndarray], None] | None = None) -> TrainResult:
    """Fit with Adam on MSE and return the best-validation snapshot.

    ``on_batch(epoch, batch_index, variate_indices)`` is called before each
    optimizer step. Validation always uses every variate.
    """
    if model_config.lookback != dataset.lookback or model_config.horizon != dataset.horizon:
        raise ConfigError(f"model (L={model_config.lookback}, F={model_config.horizon}) does not match "
                          f"dataset (L={dataset.lookback}, F={dataset.horizon})")
    tc = train_config
    if isinstance(init, Checkpoint):
        init = init.to_params()
    params = init.copy(np.float32) if init is not None else init_params(model_config, tc.seed)
    tensors = params.tensors()
    state = AdamState(lr=tc.lr)
    # separate streams: the sampling ratio must not perturb batch order or dropout
    sample_rng = np.random.default_rng([tc.seed, 1])
    drop_rng = np.random.default_rng([tc.seed, 2])

    train_windows = dataset.windows("train")
    if not train_windows:
        raise TrainingError("train split has no windows")
    n = dataset.n_variates
    k = n_sampled_variates(n, tc.variate_sample_ratio)

    stopper = EarlyStopping(tc.patience)
    best = {name: t.data.copy() for name, t in params.items()}
    history: list[EpochRecord] = []
    for epoch in range(1, tc.max_epochs + 1):
        total, count = 0.0, 0
        sizes = []
        for bi, group in enumerate(batch(train_windows, tc.batch_size, shuffle=True, seed=tc.seed,
                                         epoch=epoch)):
            x, y = stack(group)
            idx = np.arange(n)
            if k < n:
                idx = np.sort(sample_rng.choice(n, size=k, replace=False))
                x, y = x[:, idx], y[:, idx]
            sizes.append(len(idx))
            if on_batch is not None:
                on_batch(epoch, bi, idx)
            for t in tensors:
                t.grad = None
            T.reset_tape()
            try:
                loss = mse_loss(forward(x, params, model_config, training=True, rng=drop_rng), y)
                T.backward(loss)
            except NonFiniteError as exc:
                T.reset_tape()
                raise TrainingError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            adam_step(tensors, [t.grad for t in tensors], state)
            total += loss.item()
            count += 1
        val = split_mse(params, model_config, dataset, "val", tc.eval_batch_size)
        if not math.isfinite(val):
            raise TrainingError(f"epoch {epoch}: validation loss is not finite")
        improved = stopper.update(val, epoch)
        if improved:
            best = {name: t.data.copy() for name, t in params.items()}
        history.append(EpochRecord(epoch, total / count, val, improved, count, min(sizes), max(sizes)))
        log.info("epoch %d train %.6f val %.6f%s", epoch, total / count, val, " *" if improved else "")
        if stopper.should_stop:
            log.info("early stop after epoch %d (best epoch %d)", epoch, stopper.best_epoch)
            break

    for name, t in params.items():
        t.data[...] = best[name]
        t.grad = None
    if stopper.best_epoch < 0:
        stopper.best = split_mse(params, model_config, dataset, "val", tc.eval_batch_size)
    ckpt = Checkpoint.from_params(model_config, params, stopper.best, stopper.best_epoch)
    return TrainResult(ckpt, params, history)
