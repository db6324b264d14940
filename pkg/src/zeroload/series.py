"""Time-series data model, CSV ingestion, scenario splits and rolling origins.

All algorithms work on index positions; timestamps only travel along as
metadata so outputs can be written back with real times.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptySegment,
    MalformedRow,
    MissingValue,
    NonUniformStep,
    SeriesTooShort,
    UnboundedGap,
    ValidationError,
)

HOUR = timedelta(hours=1)
DEFAULT_QUANTILES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_LOOKBACK = 168
DEFAULT_SEASON = 24
CSV_COLUMNS = ("series_id", "timestamp", "value")


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError("values must be one-dimensional")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly spaced univariate series.

    ``values`` may hold NaN only between ingestion and imputation; every
    public producer in this package returns finite values.
    """

    id: str
    values: np.ndarray
    start: datetime = datetime(1970, 1, 1, tzinfo=timezone.utc)
    step: timedelta = HOUR
    unit: str = ""
    imputed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if len(self.values) < 1:
            raise ValidationError("series must hold at least one value")
        if self.step <= timedelta(0):
            raise ValidationError("step must be positive")
        if np.isinf(self.values).any():
            raise ValidationError(f"series {self.id!r} contains infinite values")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def has_gaps(self) -> bool:
        return bool(np.isnan(self.values).any())

    def timestamp(self, index: int) -> datetime:
        return self.start + index * self.step

    def timestamps(self) -> list[datetime]:
        return [self.timestamp(i) for i in range(len(self))]

    def index_of(self, ts: datetime) -> int:
        """Position of the first point at or after ``ts``."""
        offset = (ts - self.start) / self.step
        return max(0, math.ceil(offset - 1e-9))

    def slice(self, begin: int, end: int) -> "TimeSeries":
        return TimeSeries(
            id=self.id,
            values=self.values[begin:end],
            start=self.timestamp(begin),
            step=self.step,
            unit=self.unit,
        )


@dataclass(frozen=True)
class ScenarioSplit:
    train: TimeSeries
    validation: TimeSeries
    test: TimeSeries


@dataclass(frozen=True)
class ForecastTask:
    horizon: int
    lookback: int = DEFAULT_LOOKBACK
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES

    def __post_init__(self):
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        if self.horizon < 1 or self.lookback < 1:
            raise ValidationError("horizon and lookback must be positive")
        qs = self.quantiles
        if not qs or any(not 0.0 < q < 1.0 for q in qs):
            raise ValidationError("quantile levels must lie in (0, 1)")
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValidationError("quantile grid must be strictly increasing")


@dataclass(frozen=True)
class Window:
    """One rolling-origin evaluation window.

    ``origin`` is the index of the first forecast step: the context covers
    ``[origin - lookback, origin)`` and the actuals ``[origin, origin + h)``.
    """

    origin: int
    context: np.ndarray
    actuals: np.ndarray


def _parse_value(raw: str, line: int) -> float:
    raw = raw.strip()
    if raw == "" or raw.lower() in ("nan", "na", "null"):
        return math.nan
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(line, f"value {raw!r} is not a number") from None
    if math.isinf(value):
        raise MalformedRow(line, "value is infinite")
    return value


def load_csv(
    path: str | Path,
    schema: Sequence[str] = CSV_COLUMNS,
    impute: bool = False,
    unit: str = "",
) -> list[TimeSeries]:
    """Read a long-format CSV into one :class:`TimeSeries` per series id.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row.
    schema : sequence of str
        Column names for (series id, timestamp, value).
    impute : bool
        Fill timestamp gaps and empty values by linear interpolation. When
        off, a gap raises :class:`NonUniformStep` and an empty value
        raises :class:`MissingValue`.
    unit : str
        Unit label attached to every series.

    Returns
    -------
    list of TimeSeries
        In order of first appearance in the file. ``imputed`` holds the
        number of filled points.
    """
    id_col, ts_col, value_col = schema
    rows: dict[str, list[tuple[datetime, float, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {id_col, ts_col, value_col} - set(reader.fieldnames or ())
        if missing:
            raise MalformedRow(1, f"header lacks columns {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            sid = (row.get(id_col) or "").strip()
            if not sid:
                raise MalformedRow(line, "empty series id")
            try:
                ts = parse_timestamp(row[ts_col] or "")
            except ValueError:
                raise MalformedRow(line, f"bad timestamp {row[ts_col]!r}") from None
            rows.setdefault(sid, []).append((ts, _parse_value(row[value_col] or "", line), line))

    out = []
    for sid, points in rows.items():
        out.append(_assemble(sid, points, impute, unit))
    return out


def _assemble(sid: str, points, impute: bool, unit: str) -> TimeSeries:
    times = [p[0] for p in points]
    for (t0, _, _), (t1, _, line) in zip(points, points[1:]):
        if t1 <= t0:
            raise MalformedRow(line, "timestamps must be strictly increasing")
    if len(points) == 1:
        step = HOUR
    else:
        step = min(b - a for a, b in zip(times, times[1:]))

    start = times[0]
    positions = []
    for ts, _, line in points:
        k, rem = divmod(ts - start, step)
        if rem:
            raise NonUniformStep(f"series {sid!r}: line {line} is off the {step} grid")
        positions.append(k)

    values = np.full(positions[-1] + 1, np.nan)
    for k, (_, value, _) in zip(positions, points):
        values[k] = value

    if len(values) != len(points) and not impute:
        raise NonUniformStep(
            f"series {sid!r}: {len(values) - len(points)} missing timestamps (step {step})"
        )
    ts = TimeSeries(id=sid, values=values, start=start, step=step, unit=unit)
    if ts.has_gaps:
        if not impute:
            raise MissingValue(f"series {sid!r} has empty values and imputation is off")
        ts = impute_linear(ts)
    return ts


def write_csv(path: str | Path, series: Iterable[TimeSeries]) -> None:
    """Write series in the long ``series_id,timestamp,value`` format.

    Values are written with ``repr`` so finite floats round-trip exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for ts in series:
            for i, v in enumerate(ts.values):
                writer.writerow([ts.id, format_timestamp(ts.timestamp(i)), repr(float(v))])


def impute_linear(ts: TimeSeries) -> TimeSeries:
    """Fill interior NaNs by linear interpolation between observed neighbours."""
    values = np.array(ts.values)
    missing = np.isnan(values)
    if not missing.any():
        return ts
    if missing[0] or missing[-1]:
        raise UnboundedGap(f"series {ts.id!r} has a leading or trailing gap")
    idx = np.arange(len(values))
    values[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return TimeSeries(
        id=ts.id,
        values=values,
        start=ts.start,
        step=ts.step,
        unit=ts.unit,
        imputed=ts.imputed + int(missing.sum()),
    )


def split_scenario(
    ts: TimeSeries, train_end: datetime | int, val_ratio: float = 0.2
) -> ScenarioSplit:
    """Cut a series into train / validation / test at ``train_end``.

    ``train_end`` is the first test point, given as a timestamp or an index.
    The last ``val_ratio`` share of the points before it become validation.
    """
    if not 0.0 <= val_ratio < 1.0:
        raise ValidationError("val_ratio must lie in [0, 1)")
    cut = train_end if isinstance(train_end, int) else ts.index_of(train_end)
    n_val = int(round(val_ratio * cut))
    n_train = cut - n_val
    if n_train <= 0 or n_val <= 0 or cut >= len(ts):
        raise EmptySegment(
            f"split at {cut} of {len(ts)} with val_ratio {val_ratio} leaves an empty segment"
        )
    return ScenarioSplit(
        train=ts.slice(0, n_train),
        validation=ts.slice(n_train, cut),
        test=ts.slice(cut, len(ts)),
    )


def rolling_origins(
    ts: TimeSeries | np.ndarray,
    task: ForecastTask,
    stride: int = 1,
    start: int | None = None,
) -> list[Window]:
    """Enumerate (context, actuals) windows with origins advancing by ``stride``.

    ``start`` is the earliest allowed origin (defaults to ``task.lookback``),
    used to keep every forecast inside a test segment.
    """
    values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)
    n, h = task.lookback, task.horizon
    if stride < 1:
        raise ValidationError("stride must be positive")
    if len(values) < n + h:
        raise SeriesTooShort(f"need {n + h} points for lookback {n} and horizon {h}, got {len(values)}")
    first = n if start is None else max(n, start)
    if first + h > len(values):
        raise SeriesTooShort(f"no window fits after position {first}")
    return [
        Window(origin=t, context=values[t - n : t], actuals=values[t : t + h])
        for t in range(first, len(values) - h + 1, stride)
    ]
