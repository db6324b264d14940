"""Mean scaling and bin quantization of real-valued series into tokens.

Vocabulary layout: ``PAD = 0``, value bins ``1..N``, ``EOS = N + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateRange, EmptyInput, SpecialTokenInSpan, ValidationError

PAD = 0
DEFAULT_BINS = 100
STRATEGIES = ("uniform", "percentile")


def eos_token(n_bins: int) -> int:
    return n_bins + 1


@dataclass(frozen=True)
class ScalingParams:
    m: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValidationError("scale must be positive")

    def apply(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.m) / self.s

    def invert(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self.s + self.m


@dataclass(frozen=True)
class BinSpec:
    x_min: float
    x_max: float
    n_bins: int = DEFAULT_BINS
    strategy: str = "uniform"
    edges: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValidationError("bin count must be positive")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown binning strategy {self.strategy!r}")
        if not self.x_max > self.x_min:
            raise DegenerateRange(f"x_max {self.x_max} must exceed x_min {self.x_min}")
        if self.strategy == "percentile":
            if self.edges is None or len(self.edges) != self.n_bins + 1:
                raise ValidationError("percentile bins need N + 1 edges")

    @property
    def width(self) -> float:
        """Uniform bin width, ``(x_max - x_min) / N``."""
        return (self.x_max - self.x_min) / self.n_bins

    def edge_array(self) -> np.ndarray:
        if self.edges is not None:
            return np.asarray(self.edges)
        return self.x_min + self.width * np.arange(self.n_bins + 1)

    def centers(self) -> np.ndarray:
        if self.strategy == "uniform":
            return self.x_min + (np.arange(1, self.n_bins + 1) - 0.5) * self.width
        e = self.edge_array()
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True)
class TokenizerSpec:
    scaling: ScalingParams
    bins: BinSpec

    def to_json(self) -> dict:
        out = {
            "m": self.scaling.m,
            "s": self.scaling.s,
            "x_min": self.bins.x_min,
            "x_max": self.bins.x_max,
            "N": self.bins.n_bins,
            "strategy": self.bins.strategy,
        }
        if self.bins.edges is not None:
            out["edges"] = list(self.bins.edges)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TokenizerSpec":
        edges = obj.get("edges")
        return cls(
            scaling=ScalingParams(m=float(obj["m"]), s=float(obj["s"])),
            bins=BinSpec(
                x_min=float(obj["x_min"]),
                x_max=float(obj["x_max"]),
                n_bins=int(obj["N"]),
                strategy=obj.get("strategy", "uniform"),
                edges=tuple(float(e) for e in edges) if edges is not None else None,
            ),
        )


@dataclass(frozen=True)
class TokenSequence:
    tokens: np.ndarray
    scaling: ScalingParams
    bins: BinSpec
    clamped: int = 0

    def __len__(self) -> int:
        return len(self.tokens)


def mean_scale(values: Sequence[float]) -> tuple[np.ndarray, ScalingParams]:
    """Divide by the mean absolute value (offset fixed at 0).

    An all-zero input would give a zero scale; it falls back to 1.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise EmptyInput("cannot scale an empty sequence")
    if not np.isfinite(x).all():
        raise ValidationError("values must be finite")
    s = float(np.mean(np.abs(x)))
    params = ScalingParams(m=0.0, s=s if s > 0 else 1.0)
    return params.apply(x), params


def fit_bins(scaled: Sequence[float], n_bins: int = DEFAULT_BINS, strategy: str = "uniform") -> BinSpec:
    x = np.asarray(scaled, dtype=float)
    if x.size < 2:
        raise DegenerateRange("need at least two values to fit bins")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise DegenerateRange("all values are equal")
    if strategy == "percentile":
        edges = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1))
        edges[0], edges[-1] = lo, hi
        return BinSpec(lo, hi, n_bins, "percentile", tuple(float(e) for e in edges))
    return BinSpec(lo, hi, n_bins, strategy)


def fit_context_bins(scaled: Sequence[float], n_bins: int = DEFAULT_BINS, strategy: str = "uniform") -> BinSpec:
    """Like :func:`fit_bins` but tolerant of flat contexts.

    A constant (or single-value) context gets a unit-wide uniform range
    placed so the constant sits exactly on a bin centre.
    """
    x = np.asarray(scaled, dtype=float)
    if x.size == 0:
        raise EmptyInput("empty context")
    if x.size >= 2 and x.max() > x.min():
        return fit_bins(x, n_bins, strategy)
    c = float(x[0])
    width = 1.0 / n_bins
    lo = c - (n_bins // 2 + 0.5) * width
    return BinSpec(lo, lo + 1.0, n_bins, "uniform")


def quantize(scaled: Sequence[float], bins: BinSpec, scaling: ScalingParams | None = None) -> TokenSequence:
    """Map scaled values to bin tokens.

    Values at or above ``x_max`` go to bin N, values below ``x_min`` to
    bin 1; the number of clamped values is recorded.
    """
    x = np.asarray(scaled, dtype=float)
    n = bins.n_bins
    if bins.strategy == "uniform":
        raw = np.floor((x - bins.x_min) / bins.width).astype(np.int64) + 1
    else:
        inner = np.asarray(bins.edges[1:-1])
        raw = np.searchsorted(inner, x, side="right").astype(np.int64) + 1
    clamped = int(np.count_nonzero((x < bins.x_min) | (x > bins.x_max)))
    tokens = np.clip(raw, 1, n)
    return TokenSequence(tokens, scaling or ScalingParams(), bins, clamped)


def dequantize(tokens: TokenSequence | Sequence[int], bins: BinSpec | None = None,
               scaling: ScalingParams | None = None) -> np.ndarray:
    """Map tokens to bin centres and undo the scaling."""
    if isinstance(tokens, TokenSequence):
        bins, scaling, ids = tokens.bins, tokens.scaling, tokens.tokens
    else:
        ids = np.asarray(tokens)
        if bins is None:
            raise ValidationError("bins are required for raw token arrays")
        scaling = scaling or ScalingParams()
    ids = np.asarray(ids, dtype=np.int64)
    bad = (ids < 1) | (ids > bins.n_bins)
    if bad.any():
        raise SpecialTokenInSpan(f"token {int(ids[bad][0])} is not a value bin")
    return scaling.invert(bins.centers()[ids - 1])


def tokenize(values: Sequence[float], n_bins: int = DEFAULT_BINS,
             strategy: str = "uniform") -> TokenSequence:
    """Scale, fit bins on the same values, and quantize."""
    scaled, scaling = mean_scale(values)
    bins = fit_context_bins(scaled, n_bins, strategy)
    return quantize(scaled, bins, scaling)
