"""Command-line interface.

Exit codes: 0 on success, 1 on a validation error, 2 on any other failure.
The default config path can be supplied through ``$ZEROLOAD_CONFIG``;
command-line flags always take precedence over the config document.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..baselines import BASELINE_IDS
from ..errors import ValidationError
from ..forecast import QuantileForecast
from ..metrics import (
    DEFAULT_PINCS,
    MetricReport,
    build_report,
    format_interval_table,
    format_point_table,
    format_probabilistic_table,
)
from ..series import DEFAULT_LOOKBACK, DEFAULT_QUANTILES, load_csv, write_csv
from .config import BenchmarkConfig, ModelRef, TrainConfig, read_json
from .runner import (
    format_dm_table,
    format_timing_table,
    load_datasets,
    make_record,
    resolve_forecaster,
    run_benchmark,
    run_dm,
    run_training,
    time_models,
    write_plot_data,
    _rng,
)

log = logging.getLogger("zeroload")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _thread_limit(n: int | None):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(n)


def _level_name(a: float) -> str:
    return f"q{a:g}"


# -- commands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    series = load_csv(args.input, impute=args.impute, unit=args.unit)
    for s in series:
        print(json.dumps({"series_id": s.id, "points": len(s), "imputed": s.imputed,
                          "start": s.timestamp(0).isoformat(), "step_seconds": s.step.total_seconds()}))
    if args.output:
        write_csv(args.output, series)
    return 0


def cmd_train(args) -> int:
    doc = read_json(args.config)
    cfg = TrainConfig.from_dict(doc)
    train = cfg.train
    if args.steps is not None:
        train = replace(train, steps=args.steps)
    if args.seed is not None:
        train = replace(train, seed=args.seed)
    cfg = replace(cfg, train=train)
    if args.pool:
        cfg = replace(cfg, pool_csv=tuple(args.pool))
    if args.output:
        cfg = replace(cfg, output=args.output)
    cfg.validate()
    with _thread_limit(args.threads):
        result, meta = run_training(cfg, log=log.info)
    print(f"final loss {result.losses[-1]:.6f}")
    if result.heldout_final is not None:
        print(f"held-out loss {result.heldout_initial:.6f} -> {result.heldout_final:.6f}")
    print(f"checkpoint written to {cfg.output}")
    return 0


def cmd_forecast(args) -> int:
    quantiles = _floats(args.quantiles)
    bench = BenchmarkConfig(samples=args.samples, temperature=args.temperature)
    if Path(args.model).is_file():
        ref = ModelRef(Path(args.model).stem, args.model)
    else:
        ref = ModelRef(args.model)
        if args.model not in BASELINE_IDS:
            raise ValidationError(f"{args.model!r} is neither a checkpoint file nor a baseline id")
    forecaster = resolve_forecaster(ref, bench)
    series = load_csv(args.input, impute=args.impute)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["series_id", "step", *(_level_name(a) for a in quantiles), "point"])
        for s in series:
            context = s.values[-args.lookback:]
            qf = forecaster(context, args.horizon, quantiles, _rng(args.seed, s.id))
            point = qf.point()
            for j in range(args.horizon):
                w.writerow([s.id, j + 1, *(repr(float(qf.quantile(a)[j])) for a in quantiles),
                            repr(float(point[j]))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def read_forecast_csv(path) -> dict[str, QuantileForecast]:
    """Parse a forecast file back into one :class:`QuantileForecast` per series."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in (reader.fieldnames or []) if c.startswith("q")]
        if not cols:
            raise ValidationError(f"{path} has no quantile columns")
        levels = [float(c[1:]) for c in cols]
        rows: dict[str, list] = {}
        for row in reader:
            rows.setdefault(row["series_id"], []).append(
                (int(row["step"]), [float(row[c]) for c in cols]))
    out = {}
    for sid, items in rows.items():
        items.sort()
        values = np.array([v for _, v in items]).T
        order = np.argsort(levels)
        out[sid] = QuantileForecast(tuple(np.array(levels)[order]), values[order])
    return out


def cmd_evaluate(args) -> int:
    forecasts = read_forecast_csv(args.forecast)
    actuals = {s.id: s.values for s in load_csv(args.actuals)}
    pairs = []
    for sid, qf in forecasts.items():
        if sid not in actuals:
            raise ValidationError(f"no actuals for series {sid!r}")
        if len(actuals[sid]) < qf.horizon:
            raise ValidationError(f"series {sid!r} has fewer actuals than forecast steps")
        pairs.append((actuals[sid][: qf.horizon], qf))
    levels = pairs[0][1].levels
    quantiles = tuple(a for a in DEFAULT_QUANTILES if any(abs(a - b) < 1e-9 for b in levels)) or levels
    pincs = tuple(p for p in DEFAULT_PINCS
                  if all(any(abs(a - b) < 1e-9 for b in levels) for a in ((1 - p) / 2, (1 + p) / 2)))
    report = build_report(args.model_id, args.dataset_id, pairs[0][1].horizon, pairs, quantiles, pincs)
    text = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _bench_config(args) -> BenchmarkConfig:
    cfg = BenchmarkConfig.from_dict(read_json(args.config))
    return cfg.with_overrides(
        seed=args.seed,
        repetitions=getattr(args, "repetitions", None),
        horizons=_ints(args.horizons) if getattr(args, "horizons", None) else None,
        stride=getattr(args, "stride", None),
        max_windows=getattr(args, "max_windows", None),
        samples=getattr(args, "samples", None),
        workers=getattr(args, "workers", None),
    )


def tables(reports) -> str:
    parts = []
    for dataset in dict.fromkeys(r.dataset for r in reports):
        rs = [r for r in reports if r.dataset == dataset]
        parts += [f"== {dataset} ==", format_point_table(rs), "",
                  format_interval_table(rs), "", format_probabilistic_table(rs), ""]
    return "\n".join(parts)


def cmd_benchmark(args) -> int:
    cfg = _bench_config(args)
    cfg.validate()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _thread_limit(args.threads):
        cells = run_benchmark(cfg)
    record = make_record(cfg, cells)
    (out / "report.json").write_text(record.report_json())
    (out / "run.json").write_text(record.run_json())
    (out / "tables.txt").write_text(tables(record.reports))
    if args.plot_data:
        series = dict(load_datasets(cfg))
        for c in cells:
            if c.report is not None:
                name = f"plot_{c.dataset}_{c.model}_h{c.horizon}.csv".replace("/", "_")
                write_plot_data(out / name, c, series[c.dataset], cfg.pincs)
    print(tables(record.reports))
    if record.failed:
        print(f"{len(record.failed)} failed cell(s):")
        for f in record.failed:
            print(f"  {f['model']} {f['dataset']} h={f['horizon']}: {f['error']}")
    return 0


def cmd_dm(args) -> int:
    cfg = _bench_config(args)
    with _thread_limit(args.threads):
        rows = run_dm(cfg, args.model_a, args.model_b)
    print(format_dm_table(rows, args.model_a, args.model_b))
    if args.output:
        doc = [{"dataset": r.dataset, "horizon": r.horizon, "statistic": r.result.statistic,
                "p_value": r.result.p_value, "reject": r.result.reject} for r in rows]
        Path(args.output).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_time(args) -> int:
    cfg = _bench_config(args)
    with _thread_limit(args.threads):
        rows = time_models(cfg, args.windows)
    print(format_timing_table(rows))
    return 0


def cmd_report(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    reports = [MetricReport.from_json(r) for r in doc["reports"]]
    print(tables(reports))
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zeroload", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate a series CSV and optionally write it back normalized")
    s.add_argument("input")
    s.add_argument("--impute", action="store_true", help="fill gaps by linear interpolation")
    s.add_argument("--unit", default="")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train the token model on an augmented corpus")
    s.add_argument("--config")
    s.add_argument("--pool", nargs="*", help="CSV files forming the augmentation pool")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output")
    s.add_argument("--threads", type=int, default=1, help="BLAS threads (0 leaves the default)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("forecast", help="quantile forecasts after the end of each series")
    s.add_argument("--model", required=True, help="checkpoint path or baseline id")
    s.add_argument("--input", required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--lookback", type=int, default=DEFAULT_LOOKBACK)
    s.add_argument("--quantiles", default=",".join(str(q) for q in DEFAULT_QUANTILES))
    s.add_argument("--samples", type=int, default=20)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--impute", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("evaluate", help="score a forecast file against actuals")
    s.add_argument("--forecast", required=True)
    s.add_argument("--actuals", required=True)
    s.add_argument("--model-id", default="model")
    s.add_argument("--dataset-id", default="dataset")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_evaluate)

    for name, func, text in (("benchmark", cmd_benchmark, "rolling-origin evaluation of every cell"),
                             ("dm", cmd_dm, "Diebold-Mariano comparison of two models"),
                             ("time", cmd_time, "training and per-window inference times")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        s.add_argument("--horizons", help="comma-separated, e.g. 1,6,12,24,48")
        s.add_argument("--threads", type=int, default=1)
        s.set_defaults(func=func)
        if name == "benchmark":
            s.add_argument("-o", "--output-dir", default="results")
            s.add_argument("--repetitions", type=int)
            s.add_argument("--stride", type=int)
            s.add_argument("--max-windows", type=int)
            s.add_argument("--samples", type=int)
            s.add_argument("--workers", type=int)
            s.add_argument("--no-plot-data", dest="plot_data", action="store_false")
        elif name == "dm":
            s.add_argument("--model-a", required=True)
            s.add_argument("--model-b", required=True)
            s.add_argument("--stride", type=int)
            s.add_argument("--max-windows", type=int)
            s.add_argument("-o", "--output")
        else:
            s.add_argument("--windows", type=int, default=10)

    s = sub.add_parser("report", help="print tables from a report.json")
    s.add_argument("report")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every other failure maps to exit code 2
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
