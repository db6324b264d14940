"""Training, forecasting and benchmark orchestration behind the CLI."""
from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from ..augment import generate_corpus
from ..baselines import make_baseline
from ..errors import MismatchedWindows, ValidationError, ZeroLoadError
from ..forecast import QuantileForecast
from ..metrics import (
    DegenerateVarianceWarning,
    DMResult,
    MetricReport,
    average_reports,
    build_report,
    dm_test,
    forecast_levels,
)
from ..model import checkpoint
from ..model.sampling import sample_forecast
from ..model.training import TrainResult, make_windows, train
from ..series import (
    ForecastTask,
    TimeSeries,
    format_timestamp,
    load_csv,
    parse_timestamp,
    rolling_origins,
)
from .config import BenchmarkConfig, DatasetRef, ModelRef, TrainConfig, config_hash, derive_seed
from .synthetic import synthetic_pool

Forecaster = Callable[[np.ndarray, int, Sequence[float], np.random.Generator], QuantileForecast]


def _rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


# -- training ---------------------------------------------------------------

def load_pool(cfg: TrainConfig) -> list[TimeSeries]:
    pool = []
    for path in cfg.pool_csv:
        pool.extend(load_csv(path, impute=True))
    if cfg.synthetic is not None:
        s = cfg.synthetic
        pool.extend(synthetic_pool(s.count, s.length, s.seed))
    return pool


def run_training(cfg: TrainConfig, log: Callable[[str], None] | None = None) -> tuple[TrainResult, dict]:
    """Augment the pool, tokenize windows, train, and write the checkpoint.

    Returns the training result and the sidecar metadata (which holds the
    wall-clock time, so it is kept out of the checkpoint itself).
    """
    cfg.validate()
    pool = load_pool(cfg)
    corpus = generate_corpus(pool, cfg.mixup)
    w = cfg.window
    windows = make_windows(corpus, w.context, w.horizon, cfg.model.n_bins, w.per_series,
                           seed=cfg.train.seed, strategy=cfg.strategy)
    heldout = None
    if cfg.heldout > 0:
        extra = generate_corpus(pool, replace(cfg.mixup, count=cfg.heldout,
                                              seed=cfg.mixup.seed + 1))
        heldout = make_windows(extra, w.context, w.horizon, cfg.model.n_bins, 1,
                               seed=cfg.train.seed + 1, strategy=cfg.strategy)

    def report(step, loss):
        if log is not None and (step % 100 == 0 or step == cfg.train.steps - 1):
            log(f"step {step:5d}  loss {loss:.4f}")

    start = time.perf_counter()
    result = train(windows, cfg.model, cfg.train, heldout=heldout, callback=report)
    elapsed = time.perf_counter() - start
    tokenizer = {"N": cfg.model.n_bins, "strategy": cfg.strategy,
                 "context": w.context, "horizon": w.horizon}
    checkpoint.save(cfg.output, result.params, cfg.train, tokenizer)
    meta = {
        "config_hash": config_hash(cfg.to_dict()),
        "train_seconds": elapsed,
        "final_loss": result.losses[-1],
        "heldout_initial": result.heldout_initial,
        "heldout_final": result.heldout_final,
        "tool_version": __version__,
    }
    Path(str(cfg.output) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return result, meta


# -- forecasters ------------------------------------------------------------

def checkpoint_forecaster(path: str | Path, samples: int = 20,
                          temperature: float = 1.0) -> Forecaster:
    params, header = checkpoint.load(path)
    params = params.astype(np.float64)
    tok = header.get("tokenizer") or {}
    strategy = tok.get("strategy", "uniform")
    max_context = tok.get("context")

    def forecast(x, h, levels, rng):
        x = np.asarray(x, dtype=float)
        if max_context:
            x = x[-max_context:]
        return sample_forecast(params, x, h, samples, rng, levels, temperature, strategy)

    return forecast


def resolve_forecaster(model: ModelRef, config: BenchmarkConfig) -> Forecaster:
    if model.is_baseline:
        return make_baseline(model.id, config.baseline)
    return checkpoint_forecaster(model.checkpoint, config.samples, config.temperature)


# -- datasets and windows ---------------------------------------------------

def _index(ts: TimeSeries, bound) -> int | None:
    if bound is None:
        return None
    if isinstance(bound, int):
        return bound
    return ts.index_of(parse_timestamp(str(bound)))


def load_datasets(config: BenchmarkConfig) -> list[tuple[str, TimeSeries]]:
    """Expand dataset references into (dataset id, series) pairs."""
    out = []
    for ref in config.datasets:
        series = load_csv(ref.path, impute=config.impute)
        if ref.series is not None:
            series = [s for s in series if s.id == ref.series]
            if not series:
                raise ValidationError(f"series {ref.series!r} not found in {ref.path}")
        for s in series:
            name = ref.id if len(series) == 1 else f"{ref.id}/{s.id}"
            out.append((name, s))
    return out


def scenario_windows(ts: TimeSeries, config: BenchmarkConfig, horizon: int):
    """Rolling-origin windows inside the test segment of the scenario.

    ``train_start`` trims history before it; origins start at ``train_end``.
    Without ``train_end`` the last 20% of the series is the test segment.
    """
    sc = config.scenario
    begin = _index(ts, sc.train_start) or 0
    values = ts.values[begin:]
    end = _index(ts, sc.train_end)
    test_start = (end - begin) if end is not None else int(round(0.8 * len(values)))
    if not 0 < test_start < len(values):
        raise ValidationError(f"test start {test_start + begin} lies outside series {ts.id!r}")
    task = ForecastTask(horizon, config.lookback, config.quantiles)
    windows = rolling_origins(values, task, config.stride, start=test_start)
    if config.max_windows is not None:
        windows = windows[: config.max_windows]
    return begin, windows


# -- evaluation -------------------------------------------------------------

@dataclass
class CellResult:
    model: str
    dataset: str
    horizon: int
    report: MetricReport | None = None
    error: str | None = None
    seconds: float = 0.0
    # (origin, actuals, forecast) of the first repetition, for plots and DM
    trace: list = field(default_factory=list, repr=False)


def evaluate_cell(forecaster: Forecaster, model_id: str, dataset: str, ts: TimeSeries,
                  horizon: int, config: BenchmarkConfig, repetition: int = 0):
    """One rolling-origin pass; returns the report and the per-window trace."""
    levels = forecast_levels(config.quantiles, config.pincs)
    cell_seed = derive_seed(config.seed, model_id, dataset, horizon, repetition)
    begin, windows = scenario_windows(ts, config, horizon)
    pairs, trace = [], []
    for w in windows:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cell_seed, w.origin])))
        qf = forecaster(w.context, horizon, levels, rng)
        pairs.append((w.actuals, qf))
        trace.append((begin + w.origin, w.actuals, qf))
    report = build_report(model_id, dataset, horizon, pairs, config.quantiles, config.pincs)
    return report, trace


def run_cell(forecaster, model_id, dataset, ts, horizon, config) -> CellResult:
    cell = CellResult(model_id, dataset, horizon)
    start = time.perf_counter()
    try:
        reps = []
        for r in range(config.repetitions):
            report, trace = evaluate_cell(forecaster, model_id, dataset, ts, horizon, config, r)
            reps.append(report)
            if r == 0:
                cell.trace = trace
        report = average_reports(reps) if len(reps) > 1 else reps[0]
        report.meta = {**report.meta, "config_hash": config.hash, "repetitions": len(reps)}
        cell.report = report
    except (ZeroLoadError, ValueError, FloatingPointError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
    cell.seconds = time.perf_counter() - start
    return cell


def run_benchmark(config: BenchmarkConfig) -> list[CellResult]:
    """Evaluate every (model, dataset, horizon) cell; failures are recorded, not raised."""
    config.validate()
    datasets = load_datasets(config)
    forecasters = {}
    for m in config.models:
        if m not in forecasters:
            forecasters[m] = resolve_forecaster(m, config)
    jobs = [(m, name, ts, h) for m in config.models for name, ts in datasets
            for h in config.horizons]

    def work(job):
        m, name, ts, h = job
        return run_cell(forecasters[m], m.id, name, ts, h, config)

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            cells = list(pool.map(work, jobs))
    else:
        cells = [work(j) for j in jobs]
    return sorted(cells, key=lambda c: (c.dataset, c.horizon, c.model))


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    reports: list[MetricReport]
    failed: list[dict]
    timings: dict
    tool_version: str
    seed: int

    def report_json(self) -> str:
        """The deterministic part of the record: no wall-clock values."""
        doc = {
            "config_hash": self.config_hash,
            "failed": self.failed,
            "reports": [r.to_json() for r in self.reports],
            "seed": self.seed,
            "tool_version": self.tool_version,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def run_json(self) -> str:
        doc = {"config": self.config, "config_hash": self.config_hash,
               "timings": self.timings, "tool_version": self.tool_version, "seed": self.seed}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def verify(self) -> bool:
        """True when the stored config still hashes to the recorded value."""
        return config_hash(self.config) == self.config_hash and all(
            r.meta.get("config_hash") == self.config_hash for r in self.reports)


def make_record(config: BenchmarkConfig, cells: Sequence[CellResult]) -> RunRecord:
    return RunRecord(
        config=config.to_dict(),
        config_hash=config.hash,
        reports=[c.report for c in cells if c.report is not None],
        failed=[{"model": c.model, "dataset": c.dataset, "horizon": c.horizon, "error": c.error}
                for c in cells if c.error is not None],
        timings={f"{c.model}|{c.dataset}|{c.horizon}": c.seconds for c in cells},
        tool_version=__version__,
        seed=config.seed,
    )


def write_plot_data(path: str | Path, cell: CellResult, ts: TimeSeries, pincs: Sequence[float]) -> None:
    """Per-step line data: actual, median and interval bounds for every window."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        bounds = [f"{tag}{p:g}" for p in pincs for tag in ("lower", "upper")]
        w.writerow(["origin", "step", "timestamp", "actual", "point", *bounds])
        for origin, actuals, qf in cell.trace:
            point = qf.point()
            ivs = [qf.interval(p) for p in pincs]
            for j in range(len(actuals)):
                row = [origin, j + 1, format_timestamp(ts.timestamp(origin + j)),
                       repr(float(actuals[j])), repr(float(point[j]))]
                for lo, up in ivs:
                    row += [repr(float(lo[j])), repr(float(up[j]))]
                w.writerow(row)


# -- Diebold-Mariano --------------------------------------------------------

@dataclass
class DMRow:
    dataset: str
    horizon: int
    result: DMResult


def lead_errors(trace) -> tuple[list[int], np.ndarray]:
    """Origins and lead-``h`` point errors, ordered by origin."""
    trace = sorted(trace, key=lambda t: t[0])
    origins = [t[0] for t in trace]
    errors = np.array([t[1][-1] - t[2].point()[-1] for t in trace])
    return origins, errors


def compare(trace_a, trace_b, horizon: int, loss: str = "squared") -> DMResult:
    oa, ea = lead_errors(trace_a)
    ob, eb = lead_errors(trace_b)
    if oa != ob:
        raise MismatchedWindows("the two models were evaluated on different origins")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateVarianceWarning)
        return dm_test(ea, eb, horizon, loss)


def run_dm(config: BenchmarkConfig, model_a: str, model_b: str) -> list[DMRow]:
    """DM statistic for ``model_a`` against ``model_b`` per dataset and horizon."""
    refs = {m.id: m for m in config.models}
    for name in (model_a, model_b):
        if name not in refs:
            raise ValidationError(f"model {name!r} is not in the benchmark config")
    sub = BenchmarkConfig.from_dict({**config.to_dict(), "models": [
        refs[model_a].__dict__, refs[model_b].__dict__] if model_a != model_b
        else [refs[model_a].__dict__]})
    cells = run_benchmark(sub.with_overrides(repetitions=1))
    by_key = {(c.model, c.dataset, c.horizon): c for c in cells}
    rows = []
    for c in cells:
        if c.model != model_a:
            continue
        other = by_key[(model_b, c.dataset, c.horizon)]
        if c.error or other.error:
            raise ValidationError(f"cell {c.dataset} h={c.horizon} failed: {c.error or other.error}")
        rows.append(DMRow(c.dataset, c.horizon, compare(c.trace, other.trace, c.horizon,
                                                        config.dm_loss)))
    return rows


def format_dm_table(rows: Sequence[DMRow], model_a: str, model_b: str) -> str:
    lines = [f"DM test: {model_a} vs {model_b} (negative favours {model_a})",
             f"{'Dataset':<16}{'h':>4}{'DM':>10}{'p-value':>10}{'reject':>8}"]
    for r in rows:
        lines.append(f"{r.dataset:<16}{r.horizon:>4}{r.result.statistic:>10.3f}"
                     f"{r.result.p_value:>10.4f}{'yes' if r.result.reject else 'no':>8}")
    return "\n".join(lines)


# -- timing -----------------------------------------------------------------

@dataclass
class TimingRow:
    model: str
    train_seconds: float | None
    infer_mean: float
    infer_std: float
    windows: int


def time_models(config: BenchmarkConfig, windows: int = 10) -> list[TimingRow]:
    """Monotonic-clock inference time per window, first window treated as warm-up."""
    config.validate()
    name, ts = load_datasets(config)[0]
    h = max(config.horizons)
    _, wins = scenario_windows(ts, config.with_overrides(max_windows=windows + 1), h)
    levels = forecast_levels(config.quantiles, config.pincs)
    rows = []
    for m in config.models:
        f = resolve_forecaster(m, config)
        times = []
        for k, w in enumerate(wins):
            rng = _rng(config.seed, m.id, name, h, w.origin)
            t0 = time.perf_counter()
            f(w.context, h, levels, rng)
            dt = time.perf_counter() - t0
            if k > 0 or len(wins) == 1:
                times.append(dt)
        train_s = None
        if not m.is_baseline:
            meta = Path(str(m.checkpoint) + ".meta.json")
            if meta.is_file():
                train_s = json.loads(meta.read_text()).get("train_seconds")
        rows.append(TimingRow(m.id, train_s, float(np.mean(times)), float(np.std(times)), len(times)))
    return rows


def format_timing_table(rows: Sequence[TimingRow]) -> str:
    lines = [f"{'Model':<16}{'train (s)':>12}{'infer/window (s)':>18}{'std':>12}{'n':>5}"]
    for r in rows:
        tr = "-" if r.train_seconds is None else f"{r.train_seconds:.2f}"
        lines.append(f"{r.model:<16}{tr:>12}{r.infer_mean:>18.6f}{r.infer_std:>12.6f}{r.windows:>5}")
    return "\n".join(lines)
