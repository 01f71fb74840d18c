"""Command-line entry point.

Payload CSV goes to stdout; logs go to stderr. Every failure exits nonzero
with one stderr line of the form ``gateformer: <kind>: <reason>``
(exit 2 for usage and configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .data import stack, write_csv
from .errors import ConfigError, GateformerError
from .evaluation import (
    SyntheticSpec,
    ablation_rows,
    ablation_suite,
    evaluate,
    make_synthetic,
    reference,
    report_row,
    transfer_eval,
    write_forecast_dump,
    write_report_csv,
)
from .gradcheck import SIZES, gradcheck
from .metrics import MetricAccumulator
from .model import predict
from .training import train

log = logging.getLogger("gateformer")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _run_config(args) -> RunConfig:
    rc = load_run_config(args.config)
    if args.seed is not None:
        rc = rc.with_seed(args.seed)
    if args.out is not None:
        rc.output_dir = args.out
    return rc


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_compatible(path: str, rc: RunConfig) -> Checkpoint:
    ckpt = load_checkpoint(path)
    if (ckpt.config.lookback, ckpt.config.horizon) != (rc.model.lookback, rc.model.horizon):
        raise ConfigError(f"checkpoint has L={ckpt.config.lookback}, F={ckpt.config.horizon} but config "
                          f"requests L={rc.model.lookback}, F={rc.model.horizon}")
    return ckpt


# --------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    rc = _run_config(args)
    ds = rc.load_dataset()
    res = train(rc.model, rc.train, ds)
    out = _out_dir(rc.output_dir)
    save_checkpoint(res.checkpoint, out / "checkpoint.gfck")
    rows = [(r.epoch, f"{r.train_loss:.8f}", f"{r.val_loss:.8f}", int(r.improved)) for r in res.history]
    header = ("epoch", "train_loss", "val_loss", "improved")
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if res.history and not args.no_plots:
        from .plotting import plot_history

        plot_history([r.epoch for r in res.history], [r.train_loss for r in res.history],
                     [r.val_loss for r in res.history], out / "history.png", res.best_epoch)
    log.info("checkpoint written to %s (best epoch %d, val %.6f)", out / "checkpoint.gfck",
             res.best_epoch, res.checkpoint.best_val_loss)
    return 0


def cmd_evaluate(args) -> int:
    rc = _run_config(args)
    ckpt = _load_compatible(args.checkpoint, rc)
    ds = rc.load_dataset()
    rep = evaluate(ckpt, ds, args.split)
    rows = [report_row(rep, ds.name, args.split)]
    write_report_csv(rows, sys.stdout)
    if args.out is not None:
        with open(_out_dir(args.out) / f"report_{args.split}.csv", "w", newline="") as fh:
            write_report_csv(rows, fh)
    return 0


def cmd_forecast(args) -> int:
    rc = _run_config(args)
    ckpt = _load_compatible(args.checkpoint, rc)
    ds = rc.load_dataset()
    windows = ds.windows(args.split)
    if args.window_index == "all":
        ids = list(range(len(windows)))
    else:
        try:
            ids = [int(args.window_index)]
        except ValueError:
            raise ConfigError(f"--window-index must be an integer or 'all', got {args.window_index!r}")
        if not 0 <= ids[0] < len(windows):
            raise ConfigError(f"--window-index {ids[0]} out of range: {args.split} has {len(windows)} windows")
    params = ckpt.to_params()
    acc = MetricAccumulator(keep_series=True)
    for k in range(0, len(ids), 64):
        x, y = stack([windows[i] for i in ids[k:k + 64]])
        acc.update(predict(x, params, ckpt.config), y)
    rep = acc.report()
    write_forecast_dump(rep, sys.stdout, ids, ds.raw.variate_names)
    if args.out is not None:
        out = _out_dir(args.out)
        tag = args.window_index
        with open(out / f"forecast_{args.split}_{tag}.csv", "w", newline="") as fh:
            write_forecast_dump(rep, fh, ids, ds.raw.variate_names)
        if not args.no_plots:
            from .plotting import plot_forecast

            plot_forecast(windows[ids[0]].x, rep.targets[0], rep.predictions[0],
                          out / f"forecast_{args.split}_{ids[0]}.png", ds.raw.variate_names)
    return 0


def cmd_ablate(args) -> int:
    rc = _run_config(args)
    ds = rc.load_dataset()
    rows = ablation_suite(ds, rc.model, rc.train, args.split)
    table = ablation_rows(rows, ds, args.split)
    write_report_csv(table, sys.stdout)
    out = _out_dir(rc.output_dir)
    with open(out / "ablation.csv", "w", newline="") as fh:
        write_report_csv(table, fh)
    if not args.no_plots:
        from .plotting import plot_ablation

        refs = [reference(ds.name, ds.horizon, r.variant) for r in rows]
        plot_ablation([r.variant for r in rows], [r.report.mse for r in rows], [r.report.mae for r in rows],
                      out / "ablation.png", [None if x is None else x[0] for x in refs],
                      title=f"{ds.name}, L={ds.lookback}, F={ds.horizon}, seed={rc.train.seed}")
    return 0


def cmd_transfer(args) -> int:
    rc = _run_config(args)
    ckpt = _load_compatible(args.checkpoint, rc)
    ds = rc.load_dataset()
    rep, tuned = transfer_eval(ckpt, ds, args.mode, args.epochs, rc.train, args.split)
    rows = [report_row(rep, ds.name, args.split, f"{rep.meta['variant']}:{args.mode}")]
    write_report_csv(rows, sys.stdout)
    if args.out is not None:
        out = _out_dir(args.out)
        with open(out / f"transfer_{args.mode}.csv", "w", newline="") as fh:
            write_report_csv(rows, fh)
        if args.mode == "fine-tune":
            save_checkpoint(tuned, out / "finetuned.gfck")
    return 0


def cmd_gradcheck(args) -> int:
    if args.size not in SIZES:
        raise ConfigError(f"unknown --size {args.size!r}; available: {', '.join(SIZES)}")
    config, n = SIZES[args.size]
    results = gradcheck(config, n_variates=n, seed=args.seed or 0, tol=args.tol,
                        max_per_param=args.max_per_param or None, corrupt_group=args.corrupt_group)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("group", "max_rel_err", "n_checked", "status"))
    for r in results:
        w.writerow((r.group, f"{r.max_rel_err:.3e}", r.n_checked, "pass" if r.passed else "fail"))
    ok = all(r.passed for r in results)
    worst = max(r.max_rel_err for r in results)
    if not ok:
        print(f"gateformer: gradcheck: failed, max relative error {worst:.3e} >= {args.tol:g}",
              file=sys.stderr)
        return 1
    log.info("gradcheck passed, max relative error %.3e", worst)
    return 0


def cmd_make_synthetic(args) -> int:
    raw = make_synthetic(SyntheticSpec(n_variates=args.n_variates, length=args.length,
                                       noise_sigma=args.noise, seed=args.seed or 0))
    Path(args.path).parent.mkdir(parents=True, exist_ok=True)
    write_csv(raw, args.path)
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gateformer", description="Gateformer forecasting: train, evaluate, ablate, transfer.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="key=value run config")
        sp.add_argument("--seed", type=int, default=None, help="override train.seed")
        sp.add_argument("--out", default=None, help="artifact directory (overrides output.dir)")
        sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    sp = sub.add_parser("train", help="train and write checkpoint + history")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="report MSE/MAE of a checkpoint on a split")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("forecast", help="dump predictions for plotting")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--window-index", default="0", help="window number within the split, or 'all'")
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("ablate", help="train/evaluate the four ablation variants")
    common(sp)
    sp.add_argument("--split", default="test", choices=("val", "test"))
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("transfer", help="zero-shot or fine-tuned evaluation on another dataset")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--mode", default="zero-shot", choices=("zero-shot", "fine-tune"))
    sp.add_argument("--epochs", type=int, default=1, help="fine-tuning epochs")
    sp.add_argument("--split", default="test", choices=("val", "test"))
    sp.set_defaults(func=cmd_transfer)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    common(sp, config=False)
    sp.add_argument("--size", default="tiny")
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--max-per-param", type=int, default=0, help="probe at most this many entries (0 = all)")
    sp.add_argument("--corrupt-group", default=None, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("make-synthetic", help="write a synthetic seasonal CSV")
    sp.add_argument("path")
    sp.add_argument("--n-variates", type=int, default=8)
    sp.add_argument("--length", type=int, default=2000)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_make_synthetic)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"gateformer: usage: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            return args.func(args)
    except GateformerError as exc:
        print(f"gateformer: {exc.kind}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except KeyError as exc:
        print(f"gateformer: error: {exc.args[0]}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gateformer: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
