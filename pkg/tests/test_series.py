from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroload.errors import (
    EmptySegment,
    MalformedRow,
    MissingValue,
    NonUniformStep,
    SeriesTooShort,
    UnboundedGap,
)
from zeroload.series import (
    HOUR,
    ForecastTask,
    TimeSeries,
    impute_linear,
    load_csv,
    rolling_origins,
    split_scenario,
    write_csv,
)

T0 = datetime(2012, 1, 1, tzinfo=timezone.utc)


def write_rows(path, rows, header="series_id,timestamp,value"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def stamp(hours):
    return (T0 + timedelta(hours=hours)).strftime("%Y-%m-%dT%H:%M:%SZ")


def test_load_three_rows(tmp_path):
    p = write_rows(tmp_path / "a.csv", [f"a,{stamp(i)},{v}" for i, v in enumerate([1.0, 2.0, 3.0])])
    (ts,) = load_csv(p)
    assert len(ts) == 3
    assert ts.step == HOUR
    assert ts.start == T0
    np.testing.assert_array_equal(ts.values, [1.0, 2.0, 3.0])


def test_gap_without_imputation_raises(tmp_path):
    p = write_rows(tmp_path / "a.csv", [f"a,{stamp(0)},1", f"a,{stamp(1)},2", f"a,{stamp(3)},4"])
    with pytest.raises(NonUniformStep):
        load_csv(p)


def test_gap_with_imputation_fills_midpoint(tmp_path):
    p = write_rows(tmp_path / "a.csv", [f"a,{stamp(0)},1", f"a,{stamp(1)},2", f"a,{stamp(3)},4"])
    (ts,) = load_csv(p, impute=True)
    np.testing.assert_array_equal(ts.values, [1.0, 2.0, 3.0, 4.0])
    assert ts.imputed == 1


def test_empty_value_needs_imputation(tmp_path):
    p = write_rows(tmp_path / "a.csv", [f"a,{stamp(0)},1", f"a,{stamp(1)},", f"a,{stamp(2)},5"])
    with pytest.raises(MissingValue):
        load_csv(p)
    (ts,) = load_csv(p, impute=True)
    assert ts.values[1] == 3.0


def test_malformed_row_reports_line(tmp_path):
    p = write_rows(tmp_path / "a.csv", [f"a,{stamp(0)},1", f"a,{stamp(1)},abc"])
    with pytest.raises(MalformedRow) as err:
        load_csv(p)
    assert err.value.line == 3


def test_multiple_series_and_custom_schema(tmp_path):
    rows = [f"{sid},{stamp(i)},{i}" for sid in ("x", "y") for i in range(4)]
    p = write_rows(tmp_path / "m.csv", rows, header="id,time,load")
    series = load_csv(p, schema=("id", "time", "load"))
    assert [s.id for s in series] == ["x", "y"]


def test_impute_examples():
    ts = TimeSeries("a", [1.0, np.nan, 3.0])
    np.testing.assert_array_equal(impute_linear(ts).values, [1, 2, 3])
    ts = TimeSeries("a", [0.0, np.nan, np.nan, 3.0])
    np.testing.assert_allclose(impute_linear(ts).values, [0, 1, 2, 3], atol=1e-12)
    with pytest.raises(UnboundedGap):
        impute_linear(TimeSeries("a", [np.nan, 2.0, 3.0]))


def test_split_by_index():
    ts = TimeSeries("a", np.arange(100.0))
    sp = split_scenario(ts, 50, 0.2)
    assert (len(sp.train), len(sp.validation), len(sp.test)) == (40, 10, 50)


def test_split_at_start_is_empty():
    ts = TimeSeries("a", np.arange(100.0), start=T0)
    with pytest.raises(EmptySegment):
        split_scenario(ts, T0, 0.2)


def test_split_fifteen_days():
    # 15 days of hourly training history then a test segment
    ts = TimeSeries("a", np.arange(24 * 20.0), start=T0)
    sp = split_scenario(ts, T0 + timedelta(days=15), 0.2)
    assert (len(sp.train), len(sp.validation)) == (288, 72)
    assert sp.test.start == T0 + timedelta(days=15)


@given(st.integers(10, 200), st.floats(0.05, 0.5), st.data())
def test_split_concatenation_reproduces_values(n, ratio, data):
    ts = TimeSeries("a", np.random.default_rng(n).normal(size=n))
    cut = data.draw(st.integers(2, n - 1))
    try:
        sp = split_scenario(ts, cut, ratio)
    except EmptySegment:
        return
    joined = np.concatenate([sp.train.values, sp.validation.values, sp.test.values])
    np.testing.assert_array_equal(joined, ts.values)


def test_rolling_origins_example():
    wins = rolling_origins(np.arange(30.0), ForecastTask(5, lookback=10), stride=5)
    assert [w.origin for w in wins] == [10, 15, 20, 25]
    np.testing.assert_array_equal(wins[0].context, np.arange(10.0))
    np.testing.assert_array_equal(wins[-1].actuals, np.arange(25.0, 30.0))


def test_rolling_origins_boundaries():
    assert len(rolling_origins(np.arange(15.0), ForecastTask(5, lookback=10))) == 1
    with pytest.raises(SeriesTooShort):
        rolling_origins(np.arange(14.0), ForecastTask(5, lookback=10))


@given(st.integers(1, 20), st.integers(1, 10), st.integers(1, 7), st.integers(0, 60))
def test_rolling_origin_count(n, h, stride, extra):
    length = n + h + extra
    wins = rolling_origins(np.arange(float(length)), ForecastTask(h, lookback=n), stride)
    assert len(wins) == (length - n - h) // stride + 1
    assert all(w.origin + h <= length and len(w.actuals) == h for w in wins)


def test_rolling_origins_start():
    wins = rolling_origins(np.arange(40.0), ForecastTask(5, lookback=10), start=30)
    assert [w.origin for w in wins] == [30, 31, 32, 33, 34, 35]


def test_forecast_task_validation():
    with pytest.raises(ValueError):
        ForecastTask(0)
    with pytest.raises(ValueError):
        ForecastTask(1, quantiles=(0.5, 0.1))


@settings(max_examples=30)
@given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=1, max_size=40))
def test_csv_round_trip_is_bit_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "s.csv"
    ts = TimeSeries("s", values, start=T0)
    write_csv(path, [ts])
    (back,) = load_csv(path)
    assert back.values.tobytes() == ts.values.tobytes()
    assert back.start == ts.start


def test_values_are_read_only():
    ts = TimeSeries("a", [1.0, 2.0])
    with pytest.raises(ValueError):
        ts.values[0] = 5.0
