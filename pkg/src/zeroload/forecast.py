"""The quantile forecast container shared by the token model and baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

LEVEL_TOL = 1e-9


def nearest_rank(samples: np.ndarray, levels: Sequence[float]) -> np.ndarray:
    """Nearest-rank quantiles along axis 0.

    The value at level ``a`` is order statistic ``ceil(a * S)`` (1-based).
    Returns shape ``(len(levels),) + samples.shape[1:]``.
    """
    ordered = np.sort(np.asarray(samples, dtype=float), axis=0)
    n = ordered.shape[0]
    ranks = [min(n, max(1, math.ceil(a * n - 1e-12))) - 1 for a in levels]
    return ordered[ranks]


@dataclass
class QuantileForecast:
    """Per-step values on a grid of quantile levels.

    ``values[i, t]`` is the forecast at ``levels[i]`` for step ``t``.
    Rows are sorted along the level axis on construction, so quantiles never
    cross. ``samples`` (shape ``(S, h)``) is kept when the forecast came from
    sampling.
    """

    levels: tuple[float, ...]
    values: np.ndarray
    samples: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = tuple(float(a) for a in self.levels)
        self.values = np.sort(np.asarray(self.values, dtype=float), axis=0)
        if self.values.shape[0] != len(self.levels):
            raise ValidationError("one row of values per quantile level")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValidationError("levels must be strictly increasing")
        if not np.isfinite(self.values).all():
            raise ValidationError("forecast values must be finite")

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_samples(cls, samples: np.ndarray, levels: Sequence[float], meta: dict | None = None):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValidationError("samples must have shape (S, h) with S >= 1")
        return cls(tuple(levels), nearest_rank(samples, levels), samples, dict(meta or {}))

    def quantile(self, level: float) -> np.ndarray:
        """Values at ``level``: exact grid row, sample quantile, or interpolation."""
        for i, a in enumerate(self.levels):
            if abs(a - level) < LEVEL_TOL:
                return self.values[i]
        if self.samples is not None:
            return nearest_rank(self.samples, [level])[0]
        lv = np.asarray(self.levels)
        if not lv[0] <= level <= lv[-1]:
            raise ValidationError(f"level {level} outside the forecast grid")
        return np.array([np.interp(level, lv, self.values[:, t]) for t in range(self.horizon)])

    def point(self) -> np.ndarray:
        """The median trajectory."""
        return self.quantile(0.5)

    def interval(self, pinc: float) -> tuple[np.ndarray, np.ndarray]:
        """Central interval with nominal coverage ``pinc``."""
        alpha = 1.0 - pinc
        return self.quantile(alpha / 2), self.quantile(1 - alpha / 2)

    def restrict(self, levels: Sequence[float]) -> "QuantileForecast":
        rows = np.stack([self.quantile(a) for a in levels])
        return QuantileForecast(tuple(levels), rows, self.samples, dict(self.meta))


def point_forecast(qf: QuantileForecast) -> np.ndarray:
    return qf.point()
