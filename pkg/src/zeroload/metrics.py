"""Deterministic and probabilistic forecast scores, and the Diebold-Mariano test."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import ValidationError, ZeroActualInMAPE
from .forecast import QuantileForecast
from .series import DEFAULT_QUANTILES

DEFAULT_PINCS = (0.95, 0.90, 0.80, 0.70)


def interval_levels(pincs: Sequence[float] = DEFAULT_PINCS) -> tuple[float, ...]:
    """Quantile levels needed for central intervals at each nominal coverage."""
    out = set()
    for p in pincs:
        a = 1.0 - p
        out.update((round(a / 2, 10), round(1 - a / 2, 10)))
    return tuple(sorted(out))


def forecast_levels(quantiles: Sequence[float] = DEFAULT_QUANTILES,
                    pincs: Sequence[float] = DEFAULT_PINCS) -> tuple[float, ...]:
    return tuple(sorted(set(round(q, 10) for q in quantiles) | set(interval_levels(pincs))))


def _pair(actual, forecast) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(actual, dtype=float).ravel()
    f = np.asarray(forecast, dtype=float).ravel()
    if x.shape != f.shape:
        raise ValidationError(f"length mismatch: {x.size} actuals vs {f.size} forecasts")
    if x.size == 0:
        raise ValidationError("no points to score")
    return x, f


def rmse(actual, forecast) -> float:
    x, f = _pair(actual, forecast)
    return float(np.sqrt(np.mean((f - x) ** 2)))


def mae(actual, forecast) -> float:
    x, f = _pair(actual, forecast)
    return float(np.mean(np.abs(f - x)))


def mape(actual, forecast) -> float:
    """Mean absolute percentage error in percent, relative to the actual value."""
    x, f = _pair(actual, forecast)
    if (x == 0).any():
        raise ZeroActualInMAPE("MAPE is undefined when an actual value is zero")
    return float(100.0 * np.mean(np.abs((f - x) / x)))


def _interval(lower, upper) -> tuple[np.ndarray, np.ndarray]:
    lo, up = _pair(lower, upper)
    if (lo > up).any():
        raise ValidationError("interval lower bound exceeds upper bound")
    return lo, up


def picp(actual, lower, upper) -> float:
    """Share of actuals inside ``[lower, upper]`` (bounds inclusive)."""
    lo, up = _interval(lower, upper)
    x, _ = _pair(actual, lo)
    return float(np.mean((x >= lo) & (x <= up)))


def piaw(lower, upper) -> float:
    lo, up = _interval(lower, upper)
    return float(np.mean(up - lo))


def ace(picp_value: float, pinc: float) -> float:
    return picp_value - pinc


def winkler(actual, lower, upper, alpha: float) -> float:
    """Mean Winkler score: width plus ``2/alpha`` times any exceedance."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    lo, up = _interval(lower, upper)
    x, _ = _pair(actual, lo)
    score = (up - lo) + 2.0 / alpha * (np.maximum(x - up, 0.0) + np.maximum(lo - x, 0.0))
    return float(np.mean(score))


def pinball(actual, quantile, alpha: float):
    """Pinball loss, elementwise."""
    x = np.asarray(actual, dtype=float)
    q = np.asarray(quantile, dtype=float)
    diff = x - q
    out = np.where(diff >= 0, alpha * diff, (alpha - 1.0) * diff)
    return float(out) if out.ndim == 0 else out


def _grid_rows(forecast, levels):
    if isinstance(forecast, QuantileForecast):
        return [forecast.quantile(a) for a in levels]
    rows = np.asarray(forecast, dtype=float)
    if rows.shape[0] != len(levels):
        raise ValidationError("one forecast row per quantile level")
    return list(rows)


def qs(actual, forecast, levels: Sequence[float] = DEFAULT_QUANTILES) -> float:
    """Quantile score: mean over the level grid of the mean pinball loss.

    ``forecast`` is a :class:`QuantileForecast` or an array with one row per
    level; rows may be flattened over several windows.
    """
    if not levels:
        raise ValidationError("empty quantile grid")
    rows = _grid_rows(forecast, levels)
    total = 0.0
    for a, row in zip(levels, rows):
        x, q = _pair(actual, row)
        total += float(np.mean(pinball(x, q, a)))
    return total / len(levels)


def crps(actual, forecast, levels: Sequence[float] = DEFAULT_QUANTILES) -> float:
    """CRPS estimated from quantiles as twice the grid-averaged pinball loss."""
    return 2.0 * qs(actual, forecast, levels)


# -- Diebold-Mariano ---------------------------------------------------------

class DegenerateVarianceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    degenerate: bool = False

    @property
    def reject(self) -> bool:
        """Equal accuracy rejected at the 5% level."""
        return abs(self.statistic) > 1.96


def hac_variance(d: np.ndarray, max_lag: int) -> float:
    """Bartlett-weighted long-run variance of ``d`` with lags ``1..max_lag``."""
    m = len(d)
    dc = d - d.mean()
    v = float(dc @ dc) / m
    for k in range(1, min(max_lag, m - 1) + 1):
        gamma = float(dc[k:] @ dc[:-k]) / m
        v += 2.0 * (1.0 - k / (max_lag + 1)) * gamma
    return v


def dm_test_differential(d: Sequence[float], horizon: int = 1) -> DMResult:
    d = np.asarray(d, dtype=float)
    if d.size < 10:
        raise ValidationError("the DM test needs at least 10 loss differentials")
    if horizon < 1:
        raise ValidationError("horizon must be positive")
    v = hac_variance(d, horizon - 1)
    if not v > 0:
        warnings.warn("loss differential has zero long-run variance", DegenerateVarianceWarning,
                      stacklevel=2)
        return DMResult(0.0, 1.0, True)
    stat = float(d.mean() / math.sqrt(v / d.size))
    return DMResult(stat, float(2.0 * norm.sf(abs(stat))))


def dm_test(errors1: Sequence[float], errors2: Sequence[float], horizon: int = 1,
            loss: str = "squared") -> DMResult:
    """Diebold-Mariano test of equal accuracy between two error series.

    The loss differential is ``L(e1) - L(e2)``, so a negative statistic
    favours the first model. ``loss`` is ``"squared"`` or ``"absolute"``.
    """
    e1 = np.asarray(errors1, dtype=float)
    e2 = np.asarray(errors2, dtype=float)
    if e1.shape != e2.shape:
        raise ValidationError("error series must have equal length")
    if loss == "squared":
        d = e1**2 - e2**2
    elif loss == "absolute":
        d = np.abs(e1) - np.abs(e2)
    else:
        raise ValidationError(f"unknown DM loss {loss!r}")
    return dm_test_differential(d, horizon)


# -- reports ----------------------------------------------------------------

@dataclass
class IntervalRow:
    pinc: float
    picp: float
    ace: float
    piaw: float
    ws: float


@dataclass
class MetricReport:
    model: str
    dataset: str
    horizon: int
    rmse: float
    mae: float
    mape: float
    qs: float
    crps: float
    intervals: list[IntervalRow] = field(default_factory=list)
    n_points: int = 0
    n_windows: int = 0
    aggregation: str = "pooled"
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "MetricReport":
        obj = dict(obj)
        obj["intervals"] = [IntervalRow(**r) for r in obj.get("intervals", [])]
        return cls(**obj)


def build_report(model: str, dataset: str, horizon: int,
                 pairs: Sequence[tuple[Sequence[float], QuantileForecast]],
                 quantiles: Sequence[float] = DEFAULT_QUANTILES,
                 pincs: Sequence[float] = DEFAULT_PINCS) -> MetricReport:
    """Score every window, pooling all points before averaging."""
    if not pairs:
        raise ValidationError("no evaluation pairs")
    actual = np.concatenate([np.asarray(a, dtype=float) for a, _ in pairs])
    point = np.concatenate([f.point() for _, f in pairs])
    grid = np.stack([np.concatenate([f.quantile(a) for _, f in pairs]) for a in quantiles])
    rows = []
    for p in pincs:
        lo = np.concatenate([f.interval(p)[0] for _, f in pairs])
        up = np.concatenate([f.interval(p)[1] for _, f in pairs])
        cover = picp(actual, lo, up)
        rows.append(IntervalRow(p, cover, ace(cover, p), piaw(lo, up), winkler(actual, lo, up, 1 - p)))
    q = qs(actual, grid, quantiles)
    return MetricReport(
        model=model, dataset=dataset, horizon=horizon,
        rmse=rmse(actual, point), mae=mae(actual, point), mape=mape(actual, point),
        qs=q, crps=2.0 * q, intervals=rows, n_points=int(actual.size), n_windows=len(pairs),
    )


def average_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Field-wise mean of repeated runs of the same cell."""
    if not reports:
        raise ValidationError("nothing to average")
    first = reports[0]

    def mean(attr):
        return float(np.mean([getattr(r, attr) for r in reports]))

    rows = []
    for i, row in enumerate(first.intervals):
        rows.append(IntervalRow(
            row.pinc,
            *(float(np.mean([getattr(r.intervals[i], a) for r in reports]))
              for a in ("picp", "ace", "piaw", "ws")),
        ))
    return MetricReport(
        model=first.model, dataset=first.dataset, horizon=first.horizon,
        rmse=mean("rmse"), mae=mean("mae"), mape=mean("mape"), qs=mean("qs"), crps=mean("crps"),
        intervals=rows, n_points=first.n_points, n_windows=first.n_windows,
        aggregation=first.aggregation, meta={**first.meta, "repetitions": len(reports)},
    )


def format_point_table(reports: Sequence[MetricReport]) -> str:
    """RMSE / MAE / MAPE per horizon, one row per model."""
    horizons = sorted({r.horizon for r in reports})
    models = list(dict.fromkeys(r.model for r in reports))
    cells = {(r.model, r.horizon): r for r in reports}
    head = f"{'Model':<14}" + "".join(f"{'h=' + str(h):>30}" for h in horizons)
    sub = f"{'':<14}" + f"{'RMSE':>10}{'MAE':>10}{'MAPE(%)':>10}" * len(horizons)
    lines = [head, sub]
    for m in models:
        line = f"{m:<14}"
        for h in horizons:
            r = cells.get((m, h))
            line += (f"{r.rmse:>10.3f}{r.mae:>10.3f}{r.mape:>10.2f}" if r else f"{'-':>30}")
        lines.append(line)
    return "\n".join(lines)


def format_interval_table(reports: Sequence[MetricReport]) -> str:
    """PICP / ACE / PIAW / WS per nominal coverage, one row per model and horizon."""
    if not reports:
        return ""
    pincs = [row.pinc for row in reports[0].intervals]
    head = f"{'Model':<14}{'h':>4}" + "".join(f"{f'{p:.0%} PINC':>40}" for p in pincs)
    sub = f"{'':<18}" + f"{'PICP(%)':>10}{'ACE(%)':>10}{'PIAW':>10}{'WS':>10}" * len(pincs)
    lines = [head, sub]
    for r in reports:
        line = f"{r.model:<14}{r.horizon:>4}"
        for row in r.intervals:
            line += f"{100 * row.picp:>10.2f}{100 * row.ace:>10.2f}{row.piaw:>10.3f}{row.ws:>10.3f}"
        lines.append(line)
    return "\n".join(lines)


def format_probabilistic_table(reports: Sequence[MetricReport]) -> str:
    lines = [f"{'Model':<14}{'h':>4}{'QS':>12}{'CRPS':>12}"]
    for r in reports:
        lines.append(f"{r.model:<14}{r.horizon:>4}{r.qs:>12.4f}{r.crps:>12.4f}")
    return "\n".join(lines)


def reports_to_json(reports: Sequence[MetricReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True)
