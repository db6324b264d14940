"""Statistical comparison models: seasonal naive, Croston-SBA, NPTS, ETS-lite.

Every baseline fits on the context it is handed and returns a
:class:`~zeroload.forecast.QuantileForecast` whose 0.5 row is the point
forecast.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import InsufficientResiduals, SeriesTooShort, ValidationError
from .forecast import QuantileForecast
from .series import DEFAULT_QUANTILES, DEFAULT_SEASON

SMOOTHING_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
ETS_CANDIDATES = ("ses", "holt", "holt_winters")


@dataclass(frozen=True)
class BaselineConfig:
    season: int = DEFAULT_SEASON
    croston_alpha: float = 0.1
    npts_rate: float = 1.0
    npts_seasonal: bool = True
    npts_samples: int = 100
    ets_candidates: tuple[str, ...] = ETS_CANDIDATES

    def __post_init__(self):
        if self.season < 1:
            raise ValidationError("season must be at least 1")
        if not 0 < self.croston_alpha < 1:
            raise ValidationError("croston_alpha must lie in (0, 1)")
        if not self.npts_rate > 0:
            raise ValidationError("npts_rate must be positive")
        if self.npts_samples < 1:
            raise ValidationError("npts_samples must be at least 1")
        unknown = set(self.ets_candidates) - set(ETS_CANDIDATES)
        if unknown or not self.ets_candidates:
            raise ValidationError(f"unknown ETS candidates {sorted(unknown)}")


def residual_quantiles(point: Sequence[float], residuals: Sequence[float],
                       levels: Sequence[float] = DEFAULT_QUANTILES) -> QuantileForecast:
    """Normal quantiles around ``point`` with the residuals' standard deviation."""
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise InsufficientResiduals(f"need at least 2 residuals, got {r.size}")
    sigma = float(np.std(r, ddof=1))
    return _normal_band(point, sigma, levels)


def _normal_band(point, sigma: float, levels) -> QuantileForecast:
    point = np.asarray(point, dtype=float)
    z = norm.ppf(np.asarray(levels, dtype=float))
    z[np.isclose(levels, 0.5, atol=1e-12)] = 0.0
    values = point[None, :] + z[:, None] * sigma
    return QuantileForecast(tuple(levels), values, meta={"sigma": sigma})


def _band_or_flat(point, residuals, levels) -> QuantileForecast:
    # too few residuals to estimate a spread: quantiles collapse onto the point
    if len(residuals) < 2:
        return _normal_band(point, 0.0, levels)
    return residual_quantiles(point, residuals, levels)


# -- seasonal naive ---------------------------------------------------------

def seasonal_naive(context: Sequence[float], horizon: int, season: int = DEFAULT_SEASON,
                   levels: Sequence[float] = DEFAULT_QUANTILES) -> QuantileForecast:
    """Repeat the last observed season; steps beyond one season reuse forecasts."""
    x = np.asarray(context, dtype=float)
    if len(x) < season:
        raise SeriesTooShort(f"seasonal naive needs {season} points, got {len(x)}")
    n = len(x)
    point = np.array([x[n - season + (j % season)] for j in range(horizon)])
    residuals = x[season:] - x[:-season]
    return _band_or_flat(point, residuals, levels)


# -- Croston with the Syntetos-Boylan correction -----------------------------

def croston_states(x: np.ndarray, alpha: float):
    """Run the size/interval smoothing; yields the in-sample one-step forecasts.

    Returns ``(size, interval, fitted)`` where ``fitted[t]`` is the forecast
    made before observing ``x[t]`` (NaN until the first demand is seen).
    """
    size = interval = None
    gap = 0
    fitted = np.full(len(x), np.nan)
    bias = 1.0 - alpha / 2.0
    for t, value in enumerate(x):
        gap += 1
        if size is not None:
            fitted[t] = bias * size / interval
        if value != 0:
            if size is None:
                size, interval = float(value), float(gap)
            else:
                size += alpha * (value - size)
                interval += alpha * (gap - interval)
            gap = 0
    return size, interval, fitted


def croston_sba(context: Sequence[float], horizon: int, alpha: float = 0.1,
                levels: Sequence[float] = DEFAULT_QUANTILES) -> QuantileForecast:
    x = np.asarray(context, dtype=float)
    if (x < 0).any():
        raise ValidationError("Croston expects non-negative demand")
    size, interval, fitted = croston_states(x, alpha)
    if size is None:
        return _normal_band(np.zeros(horizon), 0.0, levels)
    point = np.full(horizon, (1.0 - alpha / 2.0) * size / interval)
    seen = ~np.isnan(fitted)
    return _band_or_flat(point, x[seen] - fitted[seen], levels)


# -- NPTS -------------------------------------------------------------------

def npts_weights(ages: np.ndarray, rate: float) -> np.ndarray:
    """Exponential-kernel sampling probabilities ``exp(-rate * age)``, normalised."""
    logits = -rate * (ages - ages.min())
    w = np.exp(logits)
    return w / w.sum()


def npts(context: Sequence[float], horizon: int, rate: float = 1.0, seasonal: bool = True,
         season: int = DEFAULT_SEASON, n_samples: int = 100,
         rng: np.random.Generator | None = None,
         levels: Sequence[float] = DEFAULT_QUANTILES) -> QuantileForecast:
    """Non-parametric sampler over past observations.

    For future step ``j`` every eligible past index ``i`` gets age
    ``(n - 1 + j) - i`` in steps, or that age divided by ``season`` in
    seasonal mode, where only same-phase indices are eligible.
    """
    x = np.asarray(context, dtype=float)
    n = len(x)
    if n < 1 or (seasonal and n < season):
        raise SeriesTooShort(f"NPTS needs {season if seasonal else 1} points, got {n}")
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = np.empty((n_samples, horizon))
    idx = np.arange(n)
    for j in range(1, horizon + 1):
        target = n - 1 + j
        if seasonal:
            pool = idx[(target - idx) % season == 0]
            ages = (target - pool) // season
        else:
            pool = idx
            ages = target - pool
        picks = rng.choice(pool, size=n_samples, p=npts_weights(ages.astype(float), rate))
        samples[:, j - 1] = x[picks]
    return QuantileForecast.from_samples(samples, levels)


# -- ETS-lite ---------------------------------------------------------------

def _ses_errors(x, alphas):
    level = np.full(len(alphas), x[0])
    err = np.full((len(x), len(alphas)), np.nan)
    for t in range(1, len(x)):
        e = x[t] - level
        err[t] = e
        level = level + alphas * e
    return err, (level,)


def _holt_errors(x, alphas, betas):
    level = np.full(len(alphas), x[1])
    trend = np.full(len(alphas), x[1] - x[0])
    err = np.full((len(x), len(alphas)), np.nan)
    for t in range(2, len(x)):
        e = x[t] - (level + trend)
        err[t] = e
        new_level = level + trend + alphas * e
        trend = trend + betas * (new_level - level - trend)
        level = new_level
    return err, (level, trend)


def _hw_init(x, m):
    first, second = x[:m].mean(), x[m : 2 * m].mean()
    trend = (second - first) / m
    offsets = np.arange(m) - (m - 1) / 2.0
    seasonal = x[:m] - (first + trend * offsets)
    level = first + trend * (m - 1) / 2.0
    return level, trend, seasonal


def _hw_errors(x, m, alphas, betas, gammas):
    l0, b0, s0 = _hw_init(x, m)
    k = len(alphas)
    level = np.full(k, l0)
    trend = np.full(k, b0)
    seas = np.tile(s0[:, None], (1, k))
    err = np.full((len(x), k), np.nan)
    for t in range(m, len(x)):
        s_old = seas[t % m]
        e = x[t] - (level + trend + s_old)
        err[t] = e
        new_level = alphas * (x[t] - s_old) + (1 - alphas) * (level + trend)
        trend = betas * (new_level - level) + (1 - betas) * trend
        seas[t % m] = gammas * (x[t] - new_level) + (1 - gammas) * s_old
        level = new_level
    return err, (level, trend, seas)


@dataclass
class EtsFit:
    kind: str
    params: tuple[float, ...]
    val_mse: float
    residuals: np.ndarray
    state: tuple = field(repr=False, default=())

    def forecast(self, horizon: int, n: int, season: int) -> np.ndarray:
        steps = np.arange(1, horizon + 1)
        if self.kind == "ses":
            return np.full(horizon, self.state[0])
        if self.kind == "holt":
            level, trend = self.state
            return level + steps * trend
        level, trend, seas = self.state
        phase = (n + steps - 1) % season
        return level + steps * trend + seas[phase]


def _fit_candidate(kind: str, x: np.ndarray, season: int, val_start: int) -> EtsFit | None:
    grid1 = np.array(SMOOTHING_GRID)
    if kind == "ses":
        combos = [(a,) for a in SMOOTHING_GRID]
        if len(x) < 2:
            return None
        err, state = _ses_errors(x, grid1)
    elif kind == "holt":
        combos = list(itertools.product(SMOOTHING_GRID, repeat=2))
        if len(x) < 3:
            return None
        a, b = (np.array(c) for c in zip(*combos))
        err, state = _holt_errors(x, a, b)
    else:
        combos = list(itertools.product(SMOOTHING_GRID, repeat=3))
        if len(x) < 2 * season:
            return None
        a, b, g = (np.array(c) for c in zip(*combos))
        err, state = _hw_errors(x, season, a, b, g)
    val = err[val_start:]
    if np.isnan(val).any():
        return None
    mse = np.mean(val * val, axis=0)
    best = int(np.argmin(mse))
    picked = tuple(s[..., best] for s in state)
    resid = err[:, best]
    return EtsFit(kind, combos[best], float(mse[best]), resid[~np.isnan(resid)], picked)


def fit_ets_lite(context: Sequence[float], season: int = DEFAULT_SEASON,
                 candidates: Sequence[str] = ETS_CANDIDATES, val_ratio: float = 0.2) -> EtsFit:
    """Grid-fit each candidate and keep the lowest one-step validation MSE.

    Validation is the last ``val_ratio`` share of the context. Ties go to the
    simpler model (order of ``ETS_CANDIDATES``).
    """
    x = np.asarray(context, dtype=float)
    val_start = len(x) - max(1, int(round(val_ratio * len(x))))
    fits = [f for kind in ETS_CANDIDATES if kind in candidates
            for f in [_fit_candidate(kind, x, season, val_start)] if f is not None]
    if not fits:
        raise SeriesTooShort(f"no ETS candidate fits a context of {len(x)} points")
    best = fits[0]
    scale = max(float(np.mean(x * x)), 1e-300)
    for f in fits[1:]:
        if f.val_mse < best.val_mse - 1e-12 * scale:
            best = f
    return best


def ets_lite(context: Sequence[float], horizon: int, season: int = DEFAULT_SEASON,
             candidates: Sequence[str] = ETS_CANDIDATES,
             levels: Sequence[float] = DEFAULT_QUANTILES) -> QuantileForecast:
    x = np.asarray(context, dtype=float)
    fit = fit_ets_lite(x, season, candidates)
    point = fit.forecast(horizon, len(x), season)
    qf = _band_or_flat(point, fit.residuals, levels)
    qf.meta.update({"ets_model": fit.kind, "ets_params": list(fit.params)})
    return qf


def context_mean(context: Sequence[float], horizon: int,
                 levels: Sequence[float] = DEFAULT_QUANTILES) -> QuantileForecast:
    """Degenerate reference: the context mean at every quantile and step."""
    mean = float(np.mean(np.asarray(context, dtype=float)))
    return QuantileForecast(tuple(levels), np.full((len(levels), horizon), mean))


# -- registry ---------------------------------------------------------------

Forecaster = Callable[..., QuantileForecast]


def make_baseline(name: str, config: BaselineConfig = BaselineConfig()) -> Forecaster:
    """Return ``f(context, horizon, levels, rng) -> QuantileForecast`` for a registered id."""
    c = config
    registry = {
        "snm": lambda x, h, levels, rng: seasonal_naive(x, h, c.season, levels),
        "csba": lambda x, h, levels, rng: croston_sba(x, h, c.croston_alpha, levels),
        "npts": lambda x, h, levels, rng: npts(x, h, c.npts_rate, c.npts_seasonal, c.season,
                                               c.npts_samples, rng, levels),
        "ets_lite": lambda x, h, levels, rng: ets_lite(x, h, c.season, c.ets_candidates, levels),
        "context_mean": lambda x, h, levels, rng: context_mean(x, h, levels),
    }
    if name not in registry:
        raise ValidationError(f"unknown baseline {name!r}; choose from {sorted(registry)}")
    return registry[name]


BASELINE_IDS = ("snm", "csba", "npts", "ets_lite", "context_mean")
