"""Gateformer: gated temporal and variate-wise attention for multivariate forecasting."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import RawSeries, SplitSpec, TimeSeriesDataset, load_csv
from .evaluation import (
    SyntheticSpec,
    ablation_suite,
    baseline_repeat_last,
    evaluate,
    make_synthetic,
    transfer_eval,
)
from .metrics import ForecastReport
from .model import GateformerParams, ModelConfig, forward, init_params, predict
from .training import TrainConfig, mse_loss, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "ForecastReport",
    "GateformerParams",
    "ModelConfig",
    "RawSeries",
    "SplitSpec",
    "SyntheticSpec",
    "TimeSeriesDataset",
    "TrainConfig",
    "ablation_suite",
    "baseline_repeat_last",
    "evaluate",
    "forward",
    "init_params",
    "load_checkpoint",
    "load_csv",
    "make_synthetic",
    "mse_loss",
    "predict",
    "save_checkpoint",
    "train",
    "transfer_eval",
]
