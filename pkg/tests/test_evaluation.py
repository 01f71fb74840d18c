import io
import math

import numpy as np
import pytest

from gateformer.data import RawSeries, SplitSpec, TimeSeriesDataset
from gateformer.errors import ConfigError
from gateformer.evaluation import (DUMP_COLUMNS, REPORT_COLUMNS, VARIANTS, SyntheticSpec, ablation_rows,
                                   ablation_suite, baseline_repeat_last, evaluate, evaluate_predictor,
                                   make_lead_lag, make_synthetic, reference, report_csv, report_row,
                                   transfer_eval, variant_of, write_forecast_dump)
from gateformer.metrics import MetricAccumulator
from gateformer.model import ModelConfig, predict
from gateformer.training import TrainConfig, train

CFG = ModelConfig(lookback=32, horizon=8, patch_len=8, d_model=16, n_heads=4)
FAST = TrainConfig(lr=1e-3, batch_size=16, max_epochs=3, seed=0)


def oracle_for(dataset, split):
    """Predictor that looks up the true continuation of each window by its input."""
    table = {w.x.tobytes(): w.y for w in dataset.windows(split)}
    return lambda x: np.stack([table[xb.tobytes()] for xb in x])


# --------------------------------------------------------------------------
# metric accumulation


def test_oracle_and_offset_predictors(seasonal_dataset):
    rep = evaluate_predictor(oracle_for(seasonal_dataset, "test"), seasonal_dataset)
    assert rep.mse == 0.0 and rep.mae == 0.0
    off = oracle_for(seasonal_dataset, "test")
    rep = evaluate_predictor(lambda x: off(x) + 1.0, seasonal_dataset)
    assert abs(rep.mse - 1.0) < 1e-6 and abs(rep.mae - 1.0) < 1e-6
    assert rep.n_windows == len(seasonal_dataset.windows("test"))


def test_accumulator_matches_loop_oracle(rng):
    acc = MetricAccumulator()
    preds, trues = [], []
    for b in (5, 3, 1):
        p, t = rng.normal(size=(b, 3, 4)).astype(np.float32), rng.normal(size=(b, 3, 4)).astype(np.float32)
        acc.update(p, t)
        preds.append(p)
        trues.append(t)
    rep = acc.report()
    pairs = [(float(a), float(b)) for p, t in zip(preds, trues) for a, b in zip(p.ravel(), t.ravel())]
    assert abs(rep.mse - math.fsum((a - b) ** 2 for a, b in pairs) / len(pairs)) < 1e-9
    assert abs(rep.mae - math.fsum(abs(a - b) for a, b in pairs) / len(pairs)) < 1e-9
    p, t = np.concatenate(preds), np.concatenate(trues)
    np.testing.assert_allclose(rep.mse_per_step, ((p - t) ** 2).mean(axis=(0, 1)), rtol=1e-6)
    np.testing.assert_allclose(rep.mae_per_variate, np.abs(p - t).mean(axis=(0, 2)), rtol=1e-6)
    assert rep.mae ** 2 <= rep.mse + 1e-12


def test_model_evaluation_matches_per_window_loop(seasonal_dataset):
    res = train(CFG, FAST.__class__(lr=1e-3, batch_size=16, max_epochs=1), seasonal_dataset)
    rep = evaluate(res.checkpoint, seasonal_dataset, "test", batch_size=7)
    params = res.checkpoint.to_params()
    sq, ab, count = [], [], 0
    for w in seasonal_dataset.windows("test"):
        d = predict(w.x, params, CFG).astype(np.float64) - w.y
        sq.append(float((d ** 2).sum()))
        ab.append(float(np.abs(d).sum()))
        count += d.size
    assert abs(rep.mse - math.fsum(sq) / count) < 1e-6
    assert abs(rep.mae - math.fsum(ab) / count) < 1e-6
    assert rep.meta["variant"] == "full"


# --------------------------------------------------------------------------
# baseline


def test_repeat_last_on_constant_series_is_exact():
    raw = RawSeries(np.full((2, 300), 3.5, np.float32), ["a", "b"])
    rep = baseline_repeat_last(TimeSeriesDataset(raw, SplitSpec(), 16, 4, scale=False))
    assert rep.mse == 0.0 and rep.mae == 0.0


def test_repeat_last_on_ramp():
    raw = RawSeries(np.arange(300, dtype=np.float32)[None], ["ramp"])
    rep = baseline_repeat_last(TimeSeriesDataset(raw, SplitSpec(), 16, 4, scale=False))
    assert rep.mse == 7.5 and rep.mae == 2.5
    with pytest.raises(ConfigError):
        baseline_repeat_last(TimeSeriesDataset(raw, SplitSpec(), 16, 4, scale=False), horizon=8)


# --------------------------------------------------------------------------
# reports


def test_reference_values():
    assert reference("ETTh2", 96, "full") == (0.306, 0.351)
    assert reference("ETTh2", 96, "no_temporal_attn") == (0.325, 0.360)
    assert reference("ETTh1", 96, "full") == (0.383, 0.398)
    assert reference("ETTh1", 192, "full") is None
    assert variant_of(CFG.replace(use_variate_gate=False)) == "no_variate_gate"
    assert variant_of(CFG.replace(use_variate_attn=False)) == "custom"


def test_report_csv_and_dump(seasonal_dataset):
    rep = evaluate_predictor(lambda x: np.repeat(x[..., -1:], 8, -1), seasonal_dataset, keep_series=True)
    text = report_csv([report_row(rep, variant="full")])
    header, row = text.strip().split("\n")
    assert header.split(",") == list(REPORT_COLUMNS)
    assert row.startswith("synthetic,test,8,full,")
    buf = io.StringIO()
    n = write_forecast_dump(rep, buf, variate_names=["a", "b", "c", "d"])
    lines = buf.getvalue().strip().split("\n")
    assert lines[0].split(",") == list(DUMP_COLUMNS)
    assert n == len(lines) - 1 == rep.n_windows * 4 * 8


# --------------------------------------------------------------------------
# ablation and transfer


def test_ablation_suite_runs_all_variants(seasonal_dataset):
    tc = TrainConfig(lr=1e-3, batch_size=32, max_epochs=1, seed=0)
    ds = TimeSeriesDataset(seasonal_dataset.raw, SplitSpec(), 32, 8, name="ETTh2")
    rows = ablation_suite(ds, CFG, tc)
    assert [r.variant for r in rows] == list(VARIANTS)
    assert [variant_of(r.result.checkpoint.config) for r in rows] == list(VARIANTS)
    table = ablation_rows(rows, ds)
    assert all(r["ref_mse"] == "" for r in table)  # horizon 8 has no reference
    for r in rows:
        assert r.report.mae ** 2 <= r.report.mse + 1e-12


@pytest.fixture(scope="module")
def source_and_target():
    src = make_synthetic(SyntheticSpec(n_variates=8, length=900, noise_sigma=0.1, seed=10))
    tgt = make_synthetic(SyntheticSpec(n_variates=5, length=700, noise_sigma=0.1, seed=11))
    ds_src = TimeSeriesDataset(src, SplitSpec(), 32, 8, name="src")
    ds_tgt = TimeSeriesDataset(tgt, SplitSpec(), 32, 8, name="tgt")
    return train(CFG, FAST, ds_src), ds_tgt


def test_zero_shot_transfer_keeps_parameters(source_and_target):
    res, tgt = source_and_target
    before = {n: a.copy() for n, a in res.checkpoint.params.items()}
    rep, ck = transfer_eval(res.checkpoint, tgt, "zero-shot")
    assert ck is res.checkpoint
    assert all((res.checkpoint.params[n] == before[n]).all() for n in before)
    assert rep.meta["mode"] == "zero-shot" and np.isfinite(rep.mse)


def test_fine_tune_improves_on_zero_shot(source_and_target):
    res, tgt = source_and_target
    zs, _ = transfer_eval(res.checkpoint, tgt, "zero-shot", split="val")
    ft, ck = transfer_eval(res.checkpoint, tgt, "fine-tune", k_epochs=2, train_config=FAST, split="val")
    assert ft.mse < zs.mse
    assert ck is not res.checkpoint
    with pytest.raises(ConfigError):
        transfer_eval(res.checkpoint, tgt, "sideways")
    with pytest.raises(ConfigError):
        transfer_eval(res.checkpoint, tgt, "fine-tune", k_epochs=0)


# --------------------------------------------------------------------------
# synthetic generators


def test_noise_free_identity_mixing_is_exact_sinusoid():
    spec = SyntheticSpec(n_variates=2, length=200, periods=np.array([[24.0], [12.0]]),
                         phases=np.zeros((2, 1)), amplitudes=np.ones((2, 1)), mixing=np.eye(2),
                         noise_sigma=0.0)
    raw = make_synthetic(spec)
    t = np.arange(200)
    np.testing.assert_allclose(raw.values[0], np.sin(2 * np.pi * t / 24), atol=1e-6)
    np.testing.assert_allclose(raw.values[1], np.sin(2 * np.pi * t / 12), atol=1e-6)


def test_synthetic_is_seeded_and_noise_has_right_variance():
    a = make_synthetic(SyntheticSpec(n_variates=3, length=500, seed=4))
    b = make_synthetic(SyntheticSpec(n_variates=3, length=500, seed=4))
    assert (a.values == b.values).all()
    base = SyntheticSpec(n_variates=1, length=10_000, periods=np.array([[24.0]]), phases=np.zeros((1, 1)),
                         amplitudes=np.ones((1, 1)), mixing=np.eye(1), noise_sigma=0.0)
    clean = make_synthetic(base).values
    noisy = make_synthetic(SyntheticSpec(**{**base.__dict__, "noise_sigma": 0.5})).values
    assert abs((noisy - clean).var() / 0.25 - 1) < 0.05


def test_lead_lag_structure():
    raw = make_lead_lag(4, 500, lag=8, seed=0, noise_sigma=0.0)
    np.testing.assert_allclose(raw.values[0, 8:], raw.values[1, :-8], atol=1e-6)


@pytest.mark.slow
def test_variate_attention_uses_cross_variate_signal():
    """The leading variate predicts the lagging one, which only variate attention can exploit."""
    cfg = ModelConfig(lookback=32, horizon=8, patch_len=8, d_model=32, n_heads=4)
    tc = TrainConfig(lr=1e-3, batch_size=16, max_epochs=6, patience=6)
    wins = 0
    for seed in range(3):
        ds = TimeSeriesDataset(make_lead_lag(3, 1500, lag=8, seed=seed), SplitSpec(), 32, 8)
        full = train(cfg, TrainConfig(**{**tc.__dict__, "seed": seed}), ds)
        solo = train(cfg.replace(use_variate_attn=False), TrainConfig(**{**tc.__dict__, "seed": seed}), ds)
        err = lambda r: evaluate(r.checkpoint, ds, "test", keep_series=True).mse_per_variate[0]  # noqa: E731
        wins += err(full) < err(solo)
    assert wins >= 2
