"""JSON configuration for training and benchmark runs."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ..augment import MixupSpec
from ..baselines import BASELINE_IDS, BaselineConfig
from ..errors import ValidationError
from ..metrics import DEFAULT_PINCS
from ..model.network import ModelConfig
from ..model.training import TrainSpec
from ..series import DEFAULT_LOOKBACK, DEFAULT_QUANTILES

CONFIG_ENV = "ZEROLOAD_CONFIG"
DEFAULT_HORIZONS = (1, 6, 12, 24, 48)


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj)).hexdigest()


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from any sequence of printable parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _build(cls, obj: dict | None, where: str):
    obj = dict(obj or {})
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")
    for key, value in obj.items():
        if isinstance(value, list):
            obj[key] = tuple(value)
    return cls(**obj)


def read_json(path: str | Path | None) -> dict:
    """Load a config document; ``None`` falls back to ``$ZEROLOAD_CONFIG`` or ``{}``."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
        if not path:
            return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file {p} does not exist")
    try:
        return json.loads(p.read_text())
    except ValueError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from None


@dataclass(frozen=True)
class SyntheticPool:
    count: int = 64
    length: int = 1024
    seed: int = 0


@dataclass(frozen=True)
class WindowSpec:
    context: int = 96
    horizon: int = 48
    per_series: int = 1


@dataclass(frozen=True)
class TrainConfig:
    pool_csv: tuple[str, ...] = ()
    synthetic: SyntheticPool | None = field(default_factory=SyntheticPool)
    mixup: MixupSpec = field(default_factory=MixupSpec)
    window: WindowSpec = field(default_factory=WindowSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSpec = field(default_factory=TrainSpec)
    strategy: str = "uniform"
    heldout: int = 32
    output: str = "model.zlc"

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"train config: unknown keys {sorted(unknown)}")
        synthetic = obj.get("synthetic", {})
        return cls(
            pool_csv=tuple(obj.get("pool_csv", ())),
            synthetic=None if synthetic is None else _build(SyntheticPool, synthetic, "synthetic"),
            mixup=_build(MixupSpec, obj.get("mixup"), "mixup"),
            window=_build(WindowSpec, obj.get("window"), "window"),
            model=_build(ModelConfig, obj.get("model"), "model"),
            train=_build(TrainSpec, obj.get("train"), "train"),
            strategy=obj.get("strategy", "uniform"),
            heldout=int(obj.get("heldout", 32)),
            output=str(obj.get("output", "model.zlc")),
        )

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def validate(self) -> None:
        """Check everything that can fail before compute starts."""
        if not self.pool_csv and self.synthetic is None:
            raise ValidationError("training needs pool_csv files or a synthetic pool")
        for path in self.pool_csv:
            if not Path(path).is_file():
                raise ValidationError(f"corpus file {path} does not exist")
        if self.window.context + 1 > self.model.context_len:
            raise ValidationError("window context does not fit the model's context_len")
        if self.window.horizon > self.model.horizon_len:
            raise ValidationError("window horizon exceeds the model's horizon_len")
        if self.mixup.length < self.window.context + self.window.horizon:
            raise ValidationError("mixup length is shorter than one training window")


@dataclass(frozen=True)
class DatasetRef:
    id: str
    path: str
    series: str | None = None


@dataclass(frozen=True)
class ModelRef:
    id: str
    checkpoint: str | None = None

    @property
    def is_baseline(self) -> bool:
        return self.checkpoint is None


@dataclass(frozen=True)
class Scenario:
    """Test start (``train_end``) plus an optional history cut (``train_start``).

    Both accept an RFC 3339 timestamp or an integer index. A late
    ``train_start`` gives the data-scarce variant of the same test period.
    """

    train_end: str | int | None = None
    train_start: str | int | None = None
    val_ratio: float = 0.2


@dataclass(frozen=True)
class BenchmarkConfig:
    datasets: tuple[DatasetRef, ...] = ()
    models: tuple[ModelRef, ...] = ()
    scenario: Scenario = field(default_factory=Scenario)
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    lookback: int = DEFAULT_LOOKBACK
    stride: int = 1
    max_windows: int | None = None
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    pincs: tuple[float, ...] = DEFAULT_PINCS
    samples: int = 20
    temperature: float = 1.0
    seed: int = 0
    repetitions: int = 1
    workers: int = 1
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    impute: bool = False
    dm_loss: str = "squared"

    @classmethod
    def from_dict(cls, obj: dict) -> "BenchmarkConfig":
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"benchmark config: unknown keys {sorted(unknown)}")
        out = {}
        for key, value in obj.items():
            if key == "datasets":
                out[key] = tuple(_build(DatasetRef, d, "dataset") for d in value)
            elif key == "models":
                out[key] = tuple(_build(ModelRef, m if isinstance(m, dict) else {"id": m}, "model")
                                 for m in value)
            elif key == "scenario":
                out[key] = _build(Scenario, value, "scenario")
            elif key == "baseline":
                out[key] = _build(BaselineConfig, value, "baseline")
            elif isinstance(value, list):
                out[key] = tuple(value)
            else:
                out[key] = value
        return cls(**out)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def with_overrides(self, **kwargs) -> "BenchmarkConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    def validate(self) -> None:
        if not self.datasets:
            raise ValidationError("benchmark config lists no datasets")
        if not self.models:
            raise ValidationError("benchmark config lists no models")
        if not self.horizons or min(self.horizons) < 1:
            raise ValidationError("horizons must be positive")
        if self.lookback < 1 or self.stride < 1 or self.samples < 1 or self.repetitions < 1:
            raise ValidationError("lookback, stride, samples and repetitions must be positive")
        for d in self.datasets:
            if not Path(d.path).is_file():
                raise ValidationError(f"dataset file {d.path} does not exist")
        for m in self.models:
            if m.is_baseline and m.id not in BASELINE_IDS:
                raise ValidationError(f"unknown baseline {m.id!r}; checkpoints need a 'checkpoint' path")
            if not m.is_baseline and not Path(m.checkpoint).is_file():
                raise ValidationError(f"checkpoint {m.checkpoint} does not exist")
        if not all(0 < p < 1 for p in self.pincs):
            raise ValidationError("PINC levels must lie in (0, 1)")
