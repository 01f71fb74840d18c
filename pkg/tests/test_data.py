import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import data_dir
from gateformer.data import (RawSeries, Segment, SplitSpec, TimeSeriesDataset, batch,
                             chronological_split, load_csv, lookback_positions, make_windows,
                             window_count, write_csv)
from gateformer.errors import ConfigError, DataError

ETT_HEADER = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT"


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --------------------------------------------------------------------------
# loading


def test_load_csv_with_date_column(tmp_path):
    p = write(tmp_path, "date,a,b\n2020-01-01 00:00,1,2\n2020-01-01 01:00,3,4\n2020-01-01 02:00,5,6\n")
    raw = load_csv(p)
    assert raw.n_variates == 2 and raw.length == 3
    assert raw.variate_names == ["a", "b"]
    np.testing.assert_array_equal(raw.values, [[1, 3, 5], [2, 4, 6]])
    assert raw.values.dtype == np.float32
    assert raw.timestamps[0] == "2020-01-01 00:00"


def test_load_csv_without_date_column(tmp_path):
    raw = load_csv(write(tmp_path, "x,y,z\n1,2,3\n4,5,6\n"))
    assert raw.n_variates == 3 and raw.length == 2 and raw.timestamps is None


def test_ett_shaped_header_gives_seven_variates(tmp_path):
    rows = "\n".join(f"2016-07-01 {h:02d}:00:00," + ",".join(str(h + c) for c in range(7)) for h in range(24))
    raw = load_csv(write(tmp_path, ETT_HEADER + "\n" + rows + "\n"))
    assert raw.n_variates == 7 and raw.variate_names[-1] == "OT"


def test_real_etth1_has_seven_variates():
    path = data_dir() / "ETTh1.csv"
    if not path.exists():
        pytest.skip(f"{path} not present")
    raw = load_csv(path)
    assert raw.n_variates == 7 and raw.length == 17420


def test_non_numeric_cell_reports_row_and_column(tmp_path):
    text = "date,a,b\n" + "".join(f"d{i},{i},{i}\n" for i in range(3)) + "d3,oops,1\n"
    with pytest.raises(DataError, match="row 5, column 2"):
        load_csv(write(tmp_path, text))


@pytest.mark.parametrize("text", [
    "a,b\n1,2\n3\n",           # ragged
    "a,b\n1,\n3,4\n",          # empty cell
    "a,b\n1,nan\n3,4\n",       # non-finite
    "a,b\n",                    # no rows
])
def test_malformed_csv_is_data_error(tmp_path, text):
    with pytest.raises(DataError):
        load_csv(write(tmp_path, text))


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_write_csv_round_trip(tmp_path, rng):
    raw = RawSeries(rng.normal(size=(3, 10)).astype(np.float32), ["a", "b", "c"])
    write_csv(raw, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.values, raw.values)


# --------------------------------------------------------------------------
# splitting


def test_ratio_split_example():
    segs = chronological_split(1000, SplitSpec(), lookback=8, horizon=4)
    assert [(s.start, s.end) for s in segs.values()] == [(0, 700), (700, 800), (800, 1000)]
    small = chronological_split(100, SplitSpec(), lookback=2, horizon=2)
    assert [s.length for s in small.values()] == [70, 10, 20]


def test_overlap_start_clamps_at_zero():
    segs = chronological_split(10_000, SplitSpec(mode="borders", borders=(70, 5000, 10_000)),
                               lookback=20, horizon=5)
    assert segs["val"].extract_start == 50
    spec = SplitSpec(mode="borders", borders=(70, 5000, 10_000))
    # with look-back 96 the 70-point train segment is too short to hold a window
    with pytest.raises(ConfigError, match="train"):
        chronological_split(10_000, spec, lookback=96, horizon=1)


def test_no_overlap_option():
    spec = SplitSpec(ratios=(0.5, 0.25, 0.25), lookback_overlap=False)
    segs = chronological_split(400, spec, lookback=10, horizon=5)
    assert all(s.extract_start == s.start for s in segs.values())


def test_ett_hourly_lookback_positions():
    segs = chronological_split(17420, SplitSpec.ett_hourly(), lookback=96, horizon=96)
    counts = tuple(lookback_positions(segs[k], 96) for k in ("train", "val", "test"))
    assert counts == (8545, 2881, 2881)
    # forecast windows additionally need the horizon inside the segment
    assert tuple(window_count(segs[k].extract_length, 96, 96) for k in ("train", "val", "test")) \
        == (8449, 2785, 2785)


def test_bad_split_specs():
    with pytest.raises(ConfigError):
        SplitSpec(ratios=(0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        SplitSpec(mode="borders", borders=(10, 5, 20))
    with pytest.raises(ConfigError):
        chronological_split(100, SplitSpec(mode="borders", borders=(50, 80, 200)), 4, 4)


# --------------------------------------------------------------------------
# windows and batches


def test_window_examples():
    v = np.arange(10, dtype=np.float32)[None]
    assert window_count(10, 6, 4) == 1
    w = make_windows(v, 0, 10, 6, 4)
    assert len(w) == 1
    np.testing.assert_array_equal(w[0].x[0], np.arange(6))
    np.testing.assert_array_equal(w[0].y[0], np.arange(6, 10))
    assert window_count(9, 6, 4) == 0
    assert window_count(20, 6, 4, stride=1) == 11
    assert window_count(20, 6, 4, stride=2) == 6
    assert len(make_windows(np.zeros((1, 20)), 0, 20, 8, 4)) == 9


def test_batch_examples():
    windows = make_windows(np.zeros((1, 20)), 0, 20, 6, 4)
    assert len(windows) == 11
    assert [len(b) for b in batch(windows[:10], 8)] == [8, 2]
    a = batch(windows, 4, shuffle=True, seed=3, epoch=1)
    b = batch(windows, 4, shuffle=True, seed=3, epoch=1)
    c = batch(windows, 4, shuffle=True, seed=3, epoch=2)
    origins = lambda bs: [w.origin for g in bs for w in g]  # noqa: E731
    assert origins(a) == origins(b)
    assert origins(a) != origins(c)
    assert sorted(origins(a)) == sorted(origins(c)) == [w.origin for w in windows]


@settings(max_examples=60, deadline=None)
@given(total=st.integers(200, 600), lookback=st.integers(2, 24), horizon=st.integers(1, 12),
       train=st.floats(0.4, 0.7), val=st.floats(0.1, 0.25))
def test_no_leakage_and_reconstruction(total, lookback, horizon, train, val):
    ratios = (train, val, 1 - train - val)
    raw = RawSeries(np.arange(3 * total, dtype=np.float32).reshape(3, total), ["a", "b", "c"])
    try:
        ds = TimeSeriesDataset(raw, SplitSpec(ratios=ratios), lookback, horizon, scale=False)
    except ConfigError:
        return
    for name, seg in ds.segments.items():
        ws = ds.windows(name)
        assert len(ws) == window_count(seg.extract_length, lookback, horizon)
        for w in ws:
            t_start = w.origin + lookback
            assert seg.start <= t_start and t_start + horizon <= seg.end
            if name == "train":
                assert w.origin >= 0 and w.origin + lookback <= seg.end
            joined = np.concatenate([w.x, w.y], axis=1)
            np.testing.assert_array_equal(joined, raw.values[:, w.origin:w.origin + lookback + horizon])


def test_scaling_uses_train_statistics(rng):
    vals = (rng.normal(size=(2, 500)) * [[3.0], [0.5]] + [[10.0], [-2.0]]).astype(np.float32)
    ds = TimeSeriesDataset(RawSeries(vals, ["a", "b"]), SplitSpec(), 16, 4)
    tr = ds.segments["train"]
    np.testing.assert_allclose(ds.values[:, tr.start:tr.end].mean(axis=1), 0, atol=1e-5)
    np.testing.assert_allclose(ds.values[:, tr.start:tr.end].std(axis=1), 1, atol=1e-4)


def test_segment_properties():
    s = Segment("val", 700, 800, 604)
    assert s.length == 100 and s.extract_length == 196
