"""Metrics over dataset splits, baselines, ablations, transfer and synthetic data."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .data import RawSeries, TimeSeriesDataset
from .errors import ConfigError
from .metrics import ForecastReport, MetricAccumulator
from .model import GateformerParams, ModelConfig, predict
from .training import TrainConfig, TrainResult, train

log = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]

# Ablation variants and the flags that switch each one on.
VARIANTS: dict[str, dict[str, bool]] = {
    "full": {},
    "no_temporal_attn": {"use_temporal_attn": False},
    "no_variate_gate": {"use_variate_gate": False},
    "no_global_embed": {"use_global_embed": False},
}

VARIANT_LABELS = {
    "full": "Gateformer",
    "no_temporal_attn": "w/o Temporal-wise Attn.",
    "no_variate_gate": "w/o Gate in Variate-wise Attn.",
    "no_global_embed": "w/o Global Temporal Embeddings",
}

# Published (MSE, MAE) at look-back 96, horizon 96, for annotation only.
_REF_DATASETS = ("ETTh1", "ETTm1", "ETTh2", "ETTm2", "Exchange", "Electricity", "Traffic", "Weather")
_REF_ROWS = {
    "full": (0.383, 0.398, 0.320, 0.360, 0.306, 0.351, 0.176, 0.260, 0.081, 0.199,
             0.146, 0.238, 0.390, 0.261, 0.168, 0.208),
    "no_temporal_attn": (0.393, 0.404, 0.327, 0.361, 0.325, 0.360, 0.179, 0.261, 0.084, 0.203,
                         0.147, 0.239, 0.395, 0.266, 0.176, 0.217),
    "no_variate_gate": (0.385, 0.400, 0.327, 0.362, 0.334, 0.367, 0.182, 0.264, 0.082, 0.200,
                        0.144, 0.239, 0.387, 0.261, 0.168, 0.208),
    "no_global_embed": (0.381, 0.397, 0.323, 0.362, 0.343, 0.367, 0.179, 0.262, 0.084, 0.200,
                        0.146, 0.241, 0.392, 0.261, 0.172, 0.212),
}
REFERENCE: dict[tuple[str, int, str], tuple[float, float]] = {
    (ds, 96, variant): (row[2 * i], row[2 * i + 1])
    for variant, row in _REF_ROWS.items()
    for i, ds in enumerate(_REF_DATASETS)
}


def reference(dataset: str, horizon: int, variant: str) -> tuple[float, float] | None:
    return REFERENCE.get((dataset, horizon, variant))


def variant_of(config: ModelConfig) -> str:
    """Name of the ablation variant a config corresponds to, or ``custom``."""
    for name, flags in VARIANTS.items():
        want = {"use_temporal_attn": True, "use_global_embed": True, "use_variate_gate": True,
                "use_variate_attn": True, **flags}
        if all(getattr(config, k) == v for k, v in want.items()):
            return name
    return "custom"


# --------------------------------------------------------------------------
# evaluation


def evaluate_predictor(predictor: Predictor, dataset: TimeSeriesDataset, split: str = "test",
                       batch_size: int = 64, keep_series: bool = False) -> ForecastReport:
    """Run ``predictor`` over every window of ``split`` in order and accumulate errors."""
    acc = MetricAccumulator(keep_series)
    for x, y in dataset.iter_arrays(split, batch_size):
        acc.update(predictor(x), y)
    rep = acc.report()
    if keep_series:
        rep.origins = [w.origin for w in dataset.windows(split)]
    rep.meta.update(dataset=dataset.name, split=split, horizon=dataset.horizon)
    return rep


def model_predictor(params: GateformerParams, config: ModelConfig) -> Predictor:
    return lambda x: predict(x, params, config)


def _check_compatible(config: ModelConfig, dataset: TimeSeriesDataset) -> None:
    if config.lookback != dataset.lookback or config.horizon != dataset.horizon:
        raise ConfigError(f"checkpoint expects L={config.lookback}, F={config.horizon} but dataset "
                          f"uses L={dataset.lookback}, F={dataset.horizon}")


def evaluate(checkpoint: Checkpoint | TrainResult, dataset: TimeSeriesDataset, split: str = "test",
             batch_size: int = 64, keep_series: bool = False) -> ForecastReport:
    if isinstance(checkpoint, TrainResult):
        checkpoint = checkpoint.checkpoint
    _check_compatible(checkpoint.config, dataset)
    params = checkpoint.to_params()
    rep = evaluate_predictor(model_predictor(params, checkpoint.config), dataset, split, batch_size,
                             keep_series)
    rep.meta["variant"] = variant_of(checkpoint.config)
    return rep


def repeat_last(x: np.ndarray, horizon: int) -> np.ndarray:
    return np.repeat(x[..., -1:], horizon, axis=-1)


def baseline_repeat_last(dataset: TimeSeriesDataset, split: str = "test",
                         horizon: int | None = None) -> ForecastReport:
    """Predict the last observed value of each variate for every future step."""
    f = dataset.horizon if horizon is None else horizon
    if f != dataset.horizon:
        raise ConfigError(f"horizon {f} does not match dataset horizon {dataset.horizon}")
    rep = evaluate_predictor(lambda x: repeat_last(x, f), dataset, split)
    rep.meta["variant"] = "repeat_last"
    return rep


# --------------------------------------------------------------------------
# report CSV

REPORT_COLUMNS = ("dataset", "split", "horizon", "variant", "mse", "mae", "ref_mse", "ref_mae")


def report_row(rep: ForecastReport, dataset: str | None = None, split: str | None = None,
               variant: str | None = None) -> dict:
    ds = dataset or rep.meta.get("dataset", "")
    var = variant or rep.meta.get("variant", "")
    ref = reference(ds, rep.horizon, var)
    return {
        "dataset": ds,
        "split": split or rep.meta.get("split", ""),
        "horizon": rep.horizon,
        "variant": var,
        "mse": f"{rep.mse:.6f}",
        "mae": f"{rep.mae:.6f}",
        "ref_mse": "" if ref is None else f"{ref[0]:.3f}",
        "ref_mae": "" if ref is None else f"{ref[1]:.3f}",
    }


def write_report_csv(rows: Iterable[dict], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


def report_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    write_report_csv(rows, buf)
    return buf.getvalue()


DUMP_COLUMNS = ("window_id", "variate", "step", "y_true", "y_pred")


def write_forecast_dump(rep: ForecastReport, fh, window_ids: Sequence[int] | None = None,
                        variate_names: Sequence[str] | None = None) -> int:
    """Write one row per (window, variate, step); returns the number of rows."""
    if rep.predictions is None or rep.targets is None:
        raise ValueError("report was built without keep_series=True")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DUMP_COLUMNS)
    ids = range(rep.predictions.shape[0]) if window_ids is None else window_ids
    rows = 0
    for wi, pred, true in zip(ids, rep.predictions, rep.targets):
        for v in range(pred.shape[0]):
            name = variate_names[v] if variate_names is not None else v
            for s in range(pred.shape[1]):
                w.writerow((wi, name, s, repr(float(true[v, s])), repr(float(pred[v, s]))))
                rows += 1
    return rows


# --------------------------------------------------------------------------
# ablation and transfer


@dataclass
class AblationRow:
    variant: str
    report: ForecastReport
    result: TrainResult


def ablation_suite(dataset: TimeSeriesDataset, base_config: ModelConfig, train_config: TrainConfig,
                   split: str = "test") -> list[AblationRow]:
    """Train and evaluate the four variants with identical seeds and hyperparameters."""
    rows = []
    for name, flags in VARIANTS.items():
        cfg = base_config.replace(**{"use_temporal_attn": True, "use_global_embed": True,
                                     "use_variate_gate": True, "use_variate_attn": True, **flags})
        log.info("ablation: training %s", name)
        res = train(cfg, train_config, dataset)
        rep = evaluate(res.checkpoint, dataset, split)
        rows.append(AblationRow(name, rep, res))
    return rows


def ablation_rows(rows: Sequence[AblationRow], dataset: TimeSeriesDataset, split: str = "test") -> list[dict]:
    return [report_row(r.report, dataset.name, split, r.variant) for r in rows]


def transfer_eval(checkpoint: Checkpoint, target: TimeSeriesDataset, mode: str = "zero-shot",
                  k_epochs: int = 1, train_config: TrainConfig | None = None,
                  split: str = "test") -> tuple[ForecastReport, Checkpoint]:
    """Evaluate a checkpoint on another dataset, optionally after ``k_epochs`` of fine-tuning.

    The variate count of ``target`` may differ from the pre-training data.
    Zero-shot never modifies ``checkpoint``; fine-tuning works on a copy.
    """
    _check_compatible(checkpoint.config, target)
    if mode == "zero-shot":
        rep = evaluate(checkpoint, target, split)
        rep.meta["mode"] = mode
        return rep, checkpoint
    if mode != "fine-tune":
        raise ConfigError(f"unknown transfer mode {mode!r}; expected zero-shot or fine-tune")
    if k_epochs < 1:
        raise ConfigError("fine-tune needs k_epochs >= 1")
    tc = train_config or TrainConfig()
    tc = TrainConfig(**{**tc.__dict__, "max_epochs": k_epochs, "patience": max(tc.patience, k_epochs)})
    res = train(checkpoint.config, tc, target, init=checkpoint)
    rep = evaluate(res.checkpoint, target, split)
    rep.meta["mode"] = mode
    return rep, res.checkpoint


# --------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    """Per-variate sums of sinusoids, mixed across variates, plus Gaussian noise.

    ``periods``, ``phases`` and ``amplitudes`` have shape ``(N, K)``; ``mixing``
    is ``(N, N)``. Missing fields are drawn from ``seed``.
    """

    n_variates: int
    length: int
    periods: np.ndarray | None = None
    phases: np.ndarray | None = None
    amplitudes: np.ndarray | None = None
    mixing: np.ndarray | None = None
    noise_sigma: float = 0.1
    seed: int = 0
    n_components: int = 2
    mix_strength: float = 0.3


def make_synthetic(spec: SyntheticSpec) -> RawSeries:
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n_variates, spec.n_components
    periods = spec.periods if spec.periods is not None else rng.choice([12.0, 24.0, 48.0, 96.0], (n, k))
    phases = spec.phases if spec.phases is not None else rng.uniform(0, 2 * np.pi, (n, k))
    amps = spec.amplitudes if spec.amplitudes is not None else rng.uniform(0.5, 1.5, (n, k))
    periods, phases, amps = (np.asarray(a, dtype=np.float64) for a in (periods, phases, amps))
    if spec.mixing is not None:
        mixing = np.asarray(spec.mixing, dtype=np.float64)
    else:
        mixing = np.eye(n) + spec.mix_strength * rng.normal(size=(n, n)) / np.sqrt(n)
    if mixing.shape != (n, n):
        raise ConfigError(f"mixing matrix must be {n}x{n}, got {mixing.shape}")
    t = np.arange(spec.length, dtype=np.float64)
    base = np.zeros((n, spec.length))
    for c in range(periods.shape[1]):
        base += amps[:, c:c + 1] * np.sin(2 * np.pi * t[None] / periods[:, c:c + 1] + phases[:, c:c + 1])
    values = mixing @ base
    if spec.noise_sigma > 0:
        values = values + rng.normal(0.0, spec.noise_sigma, size=values.shape)
    return RawSeries(values.astype(np.float32), [f"v{i}" for i in range(n)])


def make_lead_lag(n_variates: int, length: int, lag: int, seed: int = 0, noise_sigma: float = 0.05,
                  ar_coef: float = 0.9) -> RawSeries:
    """Variate 1 is an AR(1) process; variate 0 repeats it ``lag`` steps later.

    Remaining variates are independent AR(1) series. Variate 0's future is
    therefore determined by variate 1's past whenever ``lag >= horizon``.
    """
    if n_variates < 2:
        raise ConfigError("lead-lag data needs at least two variates")
    rng = np.random.default_rng(seed)
    total = length + lag
    eps = rng.normal(size=(n_variates, total))
    ar = np.zeros((n_variates, total))
    for t in range(1, total):
        ar[:, t] = ar_coef * ar[:, t - 1] + eps[:, t]
    values = ar[:, lag:].copy()
    values[0] = ar[1, :length] + noise_sigma * rng.normal(size=length)
    return RawSeries(values.astype(np.float32), [f"v{i}" for i in range(n_variates)])
