"""Sinusoid and trend series used as a training pool when no real corpus is given."""
from __future__ import annotations

import numpy as np

from ..series import TimeSeries

PERIODS = (12, 24, 48, 168)


def synthetic_pool(count: int = 64, length: int = 1024, seed: int = 0) -> list[TimeSeries]:
    """Positive-level series mixing a few harmonics of one period with a linear trend.

    Every third series is trend-only, the rest are seasonal with a random
    trend slope that is zero half the time.
    """
    out = []
    t = np.arange(length, dtype=float)
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        level = rng.uniform(5.0, 20.0)
        slope = rng.normal(0.0, 2.0 / length) * level if rng.random() < 0.5 else 0.0
        y = level + slope * t
        if i % 3 != 2:
            period = PERIODS[rng.integers(len(PERIODS))]
            for k in range(1, 4):
                amp = rng.normal(0.0, 0.25 * level / k)
                y = y + amp * np.sin(2 * np.pi * k * t / period + rng.uniform(0, 2 * np.pi))
        else:
            y = y + rng.normal(0.0, 0.02 * level, length)
        out.append(TimeSeries(id=f"syn-{i:04d}", values=y, unit="synthetic"))
    return out


def seasonal_series(length: int, period: int = 24, seed: int = 0, level: float = 50.0,
                    noise: float = 0.01) -> np.ndarray:
    """A load-like daily profile: two harmonics plus small Gaussian noise."""
    rng = np.random.Generator(np.random.PCG64(seed))
    t = np.arange(length, dtype=float)
    phase = rng.uniform(0, 2 * np.pi)
    y = (level
         + 0.2 * level * np.sin(2 * np.pi * t / period + phase)
         + 0.08 * level * np.sin(4 * np.pi * t / period + 2 * phase + 1.0))
    return y + rng.normal(0.0, noise * level, length)
