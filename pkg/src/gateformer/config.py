"""Flat ``key=value`` run configuration files.

Recognized keys::

    data.path              required; CSV file
    data.name              dataset name used in reports (default: file stem)
    data.split_mode        ratio | ett_hourly | ett_minute | borders (default ratio)
    data.ratios            train,val,test fractions (default 0.7,0.1,0.2)
    data.borders           train_end,val_end,test_end (split_mode=borders)
    data.scale             standardize with train statistics (default true)
    data.lookback_overlap  val/test inputs may reach into the previous split (default true)
    output.dir             artifact directory (default runs)
    model.<field>          any ModelConfig field, e.g. model.d_model=128
    train.<field>          any TrainConfig field, e.g. train.lr=0.0005

Blank lines and lines starting with ``#`` are ignored. Unknown keys are errors.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .data import SplitSpec, TimeSeriesDataset, load_csv
from .errors import ConfigError
from .model import ModelConfig, _parse
from .training import TrainConfig

DATA_KEYS = {"path", "name", "split_mode", "ratios", "borders", "scale", "lookback_overlap"}
SPLIT_MODES = ("ratio", "ett_hourly", "ett_minute", "borders")


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data_path: str
    data_name: str
    split: SplitSpec
    scale: bool = True
    output_dir: str = "runs"

    def load_dataset(self) -> TimeSeriesDataset:
        raw = load_csv(self.data_path)
        return TimeSeriesDataset(raw, self.split, self.model.lookback, self.model.horizon,
                                 scale=self.scale, name=self.data_name)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed))


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{no}: expected key=value, got {line!r}")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{source}:{no}: duplicate key {key}")
        out[key] = val.strip()
    return out


def _floats(raw: str, key: str, n: int) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != n:
        raise ConfigError(f"{key} needs {n} comma-separated values, got {raw!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: not numeric: {raw!r}") from None


def build(items: dict[str, str], base_dir: str | os.PathLike = ".") -> RunConfig:
    model_kw, train_kw, data = {}, {}, {}
    output_dir = "runs"
    train_fields = {f.name: f for f in fields(TrainConfig)}
    for key, val in items.items():
        section, _, name = key.partition(".")
        if section == "model":
            model_kw[name] = val
        elif section == "train":
            if name not in train_fields:
                raise ConfigError(f"unknown key {key}")
            train_kw[name] = _parse(val, train_fields[name].type)
        elif section == "data" and name in DATA_KEYS:
            data[name] = val
        elif key == "output.dir":
            output_dir = val
        else:
            raise ConfigError(f"unknown key {key}")
    if "path" not in data or not data["path"]:
        raise ConfigError("missing required key data.path")

    try:
        model = ModelConfig.from_items(model_kw)
    except ConfigError as exc:
        raise ConfigError(f"model: {exc}") from None
    train = TrainConfig(**train_kw)

    mode = data.get("split_mode", "ratio")
    overlap = _parse(data.get("lookback_overlap", "true"), "bool")
    if mode == "ratio":
        split = SplitSpec("ratio", ratios=_floats(data.get("ratios", "0.7,0.1,0.2"), "data.ratios", 3),
                          lookback_overlap=overlap)
    elif mode == "ett_hourly":
        split = replace(SplitSpec.ett_hourly(), lookback_overlap=overlap)
    elif mode == "ett_minute":
        split = replace(SplitSpec.ett_minute(), lookback_overlap=overlap)
    elif mode == "borders":
        if "borders" not in data:
            raise ConfigError("split_mode=borders needs data.borders")
        b = tuple(int(v) for v in _floats(data["borders"], "data.borders", 3))
        split = SplitSpec("borders", borders=b, lookback_overlap=overlap)
    else:
        raise ConfigError(f"data.split_mode must be one of {', '.join(SPLIT_MODES)}, got {mode!r}")

    path = Path(data["path"])
    if not path.is_absolute():
        path = Path(base_dir) / path
    name = data.get("name") or path.stem
    scale = _parse(data.get("scale", "true"), "bool")
    out = Path(output_dir)
    if not out.is_absolute():
        out = Path(base_dir) / out
    return RunConfig(model, train, str(path), name, split, scale, str(out))


def load_run_config(path: str | os.PathLike) -> RunConfig:
    """Parse a config file; relative paths inside it resolve against its directory."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        items = parse_lines(fh.read(), str(path))
    return build(items, Path(path).resolve().parent)
