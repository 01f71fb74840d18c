"""CSV loading, chronological splits and sliding windows.

Window counting convention
--------------------------
A segment of ``n`` points yields ``floor((n - L - F) / stride) + 1`` windows
(zero when negative); each window needs ``L`` input points followed by ``F``
target points. The ETT split sizes usually quoted for these benchmarks
(8545, 2881, 2881 for the hourly files at ``L = 96``) count look-back
positions only, i.e. the same formula with ``F = 0``; :func:`lookback_positions`
reproduces them on the ETT border profile.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError


@dataclass
class RawSeries:
    """Variates on rows, time on columns."""

    values: np.ndarray
    variate_names: list[str]
    timestamps: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DataError(f"series must be a non-empty N x T matrix, got shape {self.values.shape}")
        if len(self.variate_names) != self.values.shape[0]:
            raise DataError("variate_names length does not match the number of variates")
        if not np.isfinite(self.values).all():
            raise DataError("series contains non-finite values")

    @property
    def n_variates(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def select(self, rows: Sequence[int]) -> "RawSeries":
        rows = list(rows)
        return RawSeries(self.values[rows], [self.variate_names[i] for i in rows], self.timestamps)


def load_csv(path: str | os.PathLike) -> RawSeries:
    """Read a header-first CSV; column j becomes variate row j.

    A leading column named ``date`` is kept as timestamps. Parse errors name
    the 1-based file line and column of the offending cell.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_date = bool(header) and header[0].lower() == "date"
        first = 1 if has_date else 0
        names = header[first:]
        if not names:
            raise DataError(f"{path}: no value columns in header")
        rows: list[list[float]] = []
        stamps: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row at line {line_no}: "
                                f"{len(row)} cells, header has {len(header)}")
            if has_date:
                stamps.append(row[0])
            vals = []
            for col, cell in enumerate(row[first:], start=first + 1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell at row {line_no}, column {col}: "
                                    f"{cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: missing or non-finite value at row {line_no}, "
                                    f"column {col}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float32).T.copy()
    return RawSeries(values, names, stamps if has_date else None)


def write_csv(raw: RawSeries, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        head = (["date"] if raw.timestamps is not None else []) + list(raw.variate_names)
        w.writerow(head)
        for t in range(raw.length):
            row = [repr(float(v)) for v in raw.values[:, t]]
            if raw.timestamps is not None:
                row.insert(0, raw.timestamps[t])
            w.writerow(row)


# --------------------------------------------------------------------------
# splits

HOURS_PER_MONTH = 30 * 24


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "ratio"  # "ratio" or "borders"
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    borders: tuple[int, int, int] | None = None  # exclusive ends of train, val, test
    lookback_overlap: bool = True

    def __post_init__(self):
        if self.mode == "ratio":
            if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
                raise ConfigError(f"split ratios must be three positive numbers, got {self.ratios}")
            if abs(sum(self.ratios) - 1.0) > 1e-6:
                raise ConfigError(f"split ratios must sum to 1, got {self.ratios}")
        elif self.mode == "borders":
            b = self.borders
            if b is None or len(b) != 3 or not (0 < b[0] < b[1] < b[2]):
                raise ConfigError(f"borders must be three strictly increasing positive ints, got {b}")
        else:
            raise ConfigError(f"unknown split mode {self.mode!r}")

    @classmethod
    def ett_hourly(cls) -> "SplitSpec":
        """12/4/4 months of hourly data."""
        m = HOURS_PER_MONTH
        return cls(mode="borders", borders=(12 * m, 16 * m, 20 * m))

    @classmethod
    def ett_minute(cls) -> "SplitSpec":
        """12/4/4 months at 15-minute resolution."""
        m = HOURS_PER_MONTH * 4
        return cls(mode="borders", borders=(12 * m, 16 * m, 20 * m))


@dataclass(frozen=True)
class Segment:
    """Points ``[start, end)`` belong to the split; windows are cut from ``[extract_start, end)``."""

    name: str
    start: int
    end: int
    extract_start: int

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def extract_length(self) -> int:
        return self.end - self.extract_start


def segment_bounds(total: int, spec: SplitSpec) -> tuple[int, int, int]:
    """Exclusive ends of the train, val and test segments."""
    if spec.mode == "ratio":
        n_train = math.floor(spec.ratios[0] * total + 1e-9)
        n_test = math.floor(spec.ratios[2] * total + 1e-9)
        n_val = total - n_train - n_test
        ends = (n_train, n_train + n_val, total)
    else:
        ends = spec.borders
        if ends[2] > total:
            raise ConfigError(f"split borders {ends} exceed series length {total}")
    return ends


def chronological_split(raw: RawSeries | int, spec: SplitSpec, lookback: int,
                        horizon: int) -> dict[str, Segment]:
    """Split into train/val/test segments in time order.

    With ``lookback_overlap`` the val and test extraction ranges reach
    ``lookback`` points back into the preceding segment (inputs only; every
    target still lies inside its own segment).
    """
    total = raw if isinstance(raw, int) else raw.length
    e_train, e_val, e_test = segment_bounds(total, spec)
    segs = {}
    for name, start, end in (("train", 0, e_train), ("val", e_train, e_val), ("test", e_val, e_test)):
        ext = max(0, start - lookback) if (spec.lookback_overlap and start > 0) else start
        seg = Segment(name, start, end, ext)
        if seg.extract_length < lookback + horizon:
            raise ConfigError(f"{name} segment has {seg.extract_length} usable points, "
                              f"needs at least lookback + horizon = {lookback + horizon}")
        segs[name] = seg
    return segs


# --------------------------------------------------------------------------
# windows


def window_count(length: int, lookback: int, horizon: int, stride: int = 1) -> int:
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ConfigError("lookback, horizon and stride must be >= 1")
    span = length - lookback - horizon
    return span // stride + 1 if span >= 0 else 0


def lookback_positions(segment: Segment, lookback: int) -> int:
    """Number of look-back windows in a segment when the horizon is not subtracted."""
    return max(0, segment.extract_length - lookback + 1)


@dataclass(frozen=True)
class Window:
    x: np.ndarray  # N x L
    y: np.ndarray  # N x F
    origin: int    # index of x[:, 0] in the full series


def make_windows(values: np.ndarray, start: int, end: int, lookback: int, horizon: int,
                 stride: int = 1) -> list[Window]:
    """Cut ``(x, y)`` windows from ``values[:, start:end]``; ``x`` and ``y`` are views."""
    n = window_count(end - start, lookback, horizon, stride)
    out = []
    for k in range(n):
        o = start + k * stride
        out.append(Window(values[:, o:o + lookback], values[:, o + lookback:o + lookback + horizon], o))
    return out


def batch(windows: Sequence[Window], batch_size: int, shuffle: bool = False, seed: int = 0,
          epoch: int = 0) -> list[list[Window]]:
    """Group windows into batches; the shuffle order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    order = np.arange(len(windows))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(windows))
    return [[windows[i] for i in order[k:k + batch_size]] for k in range(0, len(windows), batch_size)]


def stack(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a batch into ``(B, N, L)`` inputs and ``(B, N, F)`` targets."""
    return np.stack([w.x for w in windows]), np.stack([w.y for w in windows])


# --------------------------------------------------------------------------
# dataset


@dataclass
class TimeSeriesDataset:
    """A split, optionally standardized series ready for window extraction.

    With ``scale`` each variate is standardized by the mean and population
    standard deviation of its train segment; metrics are then reported on
    that scale, as is customary for these benchmarks.
    """

    raw: RawSeries
    split: SplitSpec
    lookback: int
    horizon: int
    scale: bool = True
    name: str = "dataset"
    segments: dict[str, Segment] = field(init=False)
    values: np.ndarray = field(init=False)
    mean: np.ndarray | None = field(init=False, default=None)
    std: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        self.segments = chronological_split(self.raw, self.split, self.lookback, self.horizon)
        vals = self.raw.values
        if self.scale:
            tr = self.segments["train"]
            seg = vals[:, tr.start:tr.end].astype(np.float64)
            self.mean = seg.mean(axis=1)
            std = seg.std(axis=1)
            self.std = np.where(std > 0, std, 1.0)
            vals = ((vals - self.mean[:, None]) / self.std[:, None]).astype(np.float32)
        self.values = vals

    @property
    def n_variates(self) -> int:
        return self.values.shape[0]

    def windows(self, split: str) -> list[Window]:
        if split not in self.segments:
            raise ConfigError(f"unknown split {split!r}; expected train, val or test")
        seg = self.segments[split]
        return make_windows(self.values, seg.extract_start, seg.end, self.lookback, self.horizon)

    def iter_arrays(self, split: str, batch_size: int = 64) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for b in batch(self.windows(split), batch_size):
            yield stack(b)
