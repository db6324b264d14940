"""TSMixup: new training series as convex mixes of pooled sub-sequences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoolTooSmall, SubsequenceTooShort, ValidationError
from .series import TimeSeries
from .tokenizer import mean_scale


@dataclass(frozen=True)
class MixupSpec:
    k: int = 2
    length: int = 256
    concentration: float = 1.5
    count: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.k not in (2, 3):
            raise ValidationError("k must be 2 or 3")
        if self.length < 2:
            raise ValidationError("sub-sequence length must be at least 2")
        if self.count < 1:
            raise ValidationError("count must be at least 1")
        if not self.concentration > 0:
            raise ValidationError("concentration must be positive")


def mix(subsequences: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum over rows: ``out_j = sum_i w_i * x_ij``."""
    subsequences = np.asarray(subsequences, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (subsequences.shape[0],):
        raise ValidationError("one weight per sub-sequence")
    return weights @ subsequences


def sample_weights(k: int, concentration: float, rng: np.random.Generator) -> np.ndarray:
    w = rng.dirichlet(np.full(k, concentration))
    return w / w.sum()


def draw_subsequences(pool: list[TimeSeries], spec: MixupSpec, rng: np.random.Generator) -> np.ndarray:
    """Pick ``k`` distinct pool series and a mean-scaled window from each."""
    eligible = [ts for ts in pool if len(ts) >= spec.length]
    if len(pool) < spec.k:
        raise PoolTooSmall(f"pool holds {len(pool)} series, need {spec.k}")
    if len(eligible) < spec.k:
        raise SubsequenceTooShort(
            f"only {len(eligible)} pool series reach length {spec.length}, need {spec.k}"
        )
    chosen = rng.choice(len(eligible), size=spec.k, replace=False)
    rows = []
    for idx in chosen:
        values = eligible[idx].values
        offset = rng.integers(0, len(values) - spec.length + 1)
        scaled, _ = mean_scale(values[offset : offset + spec.length])
        rows.append(scaled)
    return np.stack(rows)


def ts_mixup(pool: list[TimeSeries], spec: MixupSpec, rng: np.random.Generator,
             weights: np.ndarray | None = None, name: str = "mix") -> TimeSeries:
    subs = draw_subsequences(pool, spec, rng)
    if weights is None:
        weights = sample_weights(spec.k, spec.concentration, rng)
    return TimeSeries(id=name, values=mix(subs, weights), unit="scaled")


def output_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per corpus member, so order of generation is irrelevant."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def generate_corpus(pool: list[TimeSeries], spec: MixupSpec) -> list[TimeSeries]:
    return [
        ts_mixup(pool, spec, output_rng(spec.seed, i), name=f"mix-{i:05d}")
        for i in range(spec.count)
    ]
