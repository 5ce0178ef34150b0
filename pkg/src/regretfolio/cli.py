"""Command-line interface: ingest, backtest, grid, report."""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import advisor as adv
from .backtester import TRADE_COLUMNS, BacktestResult, rebalance_dates, risk_free_returns, run_backtest
from .benchmarks import benchmark_buy_and_hold, benchmark_hedge, benchmark_mad
from .bundle import Bundle, ingest, load_bundle
from .config import BacktestConfig, load_config
from .errors import ConfigError, RegretfolioError, ValidationError
from .market_data import SectorMap
from .metrics import METRIC_KEYS, MetricsReport, compute_report

log = logging.getLogger("regretfolio")

NRL = "NRL"
BENCHMARKS = ("SPY", "Gold", "Hedge", "MAD")


def _prepare_out(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ValidationError(f"{out} exists and is not empty (use --force to overwrite)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provider(cfg: BacktestConfig, sectors: SectorMap | None):
    if sectors is None:
        return None
    return adv.provider_from_env(sectors, cfg.hedge_map)


def run_strategies(cfg: BacktestConfig, bundle: Bundle, provider=None):
    """The allocator plus all benchmarks on one bundle.

    Returns ``(result, curves, reports, skipped)`` where ``curves`` and
    ``reports`` are keyed by strategy name.
    """
    panel = bundle.panel
    provider = provider if provider is not None else _provider(cfg, bundle.sectors)
    result = run_backtest(cfg, panel, bundle.sentiment, bundle.sectors, provider)
    rf = risk_free_returns(panel, cfg.bond_ticker)[1:]
    curves = {NRL: result.equity}
    reports = {NRL: result.metrics}
    skipped = {}
    schedule = rebalance_dates(panel.dates, cfg.frequency)
    capital = cfg.initial_capital
    makers = {
        "SPY": lambda: benchmark_buy_and_hold(panel, cfg.benchmark_spy, capital),
        "Gold": lambda: benchmark_buy_and_hold(panel, cfg.benchmark_gold, capital),
        "Hedge": lambda: benchmark_hedge(panel, cfg.hedge_eta, schedule, capital, fees=cfg.fees),
        "MAD": lambda: benchmark_mad(panel, cfg.mad_window or cfg.window_k, schedule,
                                     cfg.constraints, capital, fees=cfg.fees,
                                     target_return=cfg.mad_target_return),
    }
    for name in BENCHMARKS:
        try:
            curves[name] = makers[name]()
            reports[name] = compute_report(curves[name], rf)
        except ValidationError as exc:
            skipped[name] = str(exc)
    return result, curves, reports, skipped


def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.4f}"


def summary_line(name: str, report: MetricsReport) -> str:
    d = report.to_dict()
    return f"{name:<6} " + " ".join(f"{k}={_fmt(d[k])}" for k in METRIC_KEYS)


def write_run(out: Path, cfg: BacktestConfig, bundle: Bundle, result: BacktestResult,
              curves: dict, reports: dict) -> None:
    dates = [d.isoformat() for d in bundle.panel.dates]
    with (out / "equity.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        w.writerows(zip(dates, (repr(float(v)) for v in result.equity)))
    bench = [n for n in BENCHMARKS if n in curves]
    with (out / "benchmarks.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *bench])
        for i, d in enumerate(dates):
            w.writerow([d, *(repr(float(curves[n][i])) for n in bench)])
    with (out / "trades.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADE_COLUMNS)
        w.writerows(tr.csv_row() for tr in result.trades)
    metrics = {name: rep.to_dict() for name, rep in reports.items()}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
    (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    run = {"config_hash": cfg.digest(), "bundle_digest": bundle.digest}
    (out / "run.json").write_text(json.dumps(run, indent=2) + "\n", encoding="utf-8")
    with (out / "advisor_log.jsonl").open("w", encoding="utf-8") as fh:
        for entry in result.advisor_log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def cmd_ingest(args) -> int:
    out = _prepare_out(args.out, args.force)
    summary = ingest(args.prices, out, args.sentiment, args.yields, args.sectors)
    for line in summary.lines():
        print(line)
    return 0


def cmd_backtest(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.bundle)
    out = _prepare_out(args.out, args.force)
    result, curves, reports, skipped = run_strategies(cfg, bundle)
    write_run(out, cfg, bundle, result, curves, reports)
    for name in (NRL, *BENCHMARKS):
        if name in reports:
            print(summary_line(name, reports[name]))
        else:
            print(f"{name:<6} skipped: {skipped[name]}")
    return 0


def expand_grid(layout: dict) -> list[dict]:
    """Cartesian product of ``layout["grid"]`` laid over ``layout["base"]``."""
    if not isinstance(layout, dict) or "grid" not in layout:
        raise ConfigError("grid", "grid file needs a 'grid' object of value lists")
    base = layout.get("base", {})
    grid = layout["grid"]
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise ConfigError("grid", "every grid entry must be a nonempty list")
    keys = sorted(grid)
    return [{**base, **dict(zip(keys, combo))} for combo in itertools.product(*(grid[k] for k in keys))]


@lru_cache(maxsize=4)
def _cached_bundle(path: str) -> Bundle:
    return load_bundle(path)


def _grid_job(job: tuple[str, dict, str]) -> dict:
    key, raw, bundle_path = job
    try:
        cfg = BacktestConfig.from_dict(raw)
        bundle = _cached_bundle(bundle_path)
        result = run_backtest(cfg, bundle.panel, bundle.sentiment, bundle.sectors,
                              _provider(cfg, bundle.sectors))
        return {"key": key, "status": "ok", "params": raw, "metrics": result.metrics.to_dict()}
    except RegretfolioError as exc:
        return {"key": key, "status": "failed", "params": raw, "error": str(exc)}


def cmd_grid(args) -> int:
    layout = json.loads(Path(args.config).read_text(encoding="utf-8"))
    configs = expand_grid(layout)
    bundle = load_bundle(args.bundle)
    out = Path(args.out)
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    if args.sort_by not in METRIC_KEYS:
        raise ConfigError("sort-by", f"unknown metric '{args.sort_by}'")

    jobs, keys = [], []
    for raw in configs:
        try:
            digest = BacktestConfig.from_dict(raw).digest()
        except ConfigError:
            digest = hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:12]
        key = hashlib.sha256(f"{digest}:{bundle.digest}".encode()).hexdigest()[:16]
        keys.append(key)
        if not (runs / f"{key}.json").exists():
            jobs.append((key, raw, str(Path(args.bundle).resolve())))
    print(f"{len(configs)} configs, {len(configs) - len(jobs)} already done")

    def store(rec):
        (runs / f"{rec['key']}.json").write_text(json.dumps(rec, sort_keys=True) + "\n",
                                                  encoding="utf-8")

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for rec in pool.map(_grid_job, jobs):
                store(rec)
    else:
        for job in jobs:
            store(_grid_job(job))

    records = [json.loads((runs / f"{k}.json").read_text(encoding="utf-8")) for k in dict.fromkeys(keys)]
    write_grid_table(records, out / "grid_results.csv", args.sort_by)
    print(f"wrote {out / 'grid_results.csv'} ({len(records)} rows)")
    return 0


def write_grid_table(records: list[dict], path: Path, sort_by: str) -> None:
    def rank(rec):
        v = rec.get("metrics", {}).get(sort_by)
        return (v is None, -(v if v is not None else 0.0))

    records = sorted(records, key=rank)
    params = sorted({k for r in records for k in r["params"]})
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_hash", "status", *params, *METRIC_KEYS, "error"])
        for r in records:
            m = r.get("metrics", {})
            w.writerow([
                r["key"], r["status"],
                *(json.dumps(r["params"].get(p)) for p in params),
                *("" if m.get(k) is None else repr(m[k]) for k in METRIC_KEYS),
                r.get("error", ""),
            ])


def cmd_report(args) -> int:
    rows, curves, dates = [], {}, None
    for run in map(Path, args.runs):
        for name in ("metrics.json", "run.json", "equity.csv"):
            if not (run / name).exists():
                raise ValidationError(f"{run}: missing {name}")
        metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
        chash = json.loads((run / "run.json").read_text(encoding="utf-8"))["config_hash"]
        for strategy, rec in metrics.items():
            rows.append([run.name, chash, strategy,
                         *("undefined" if rec[k] is None else repr(rec[k]) for k in METRIC_KEYS)])
        series = _read_columns(run / "equity.csv")
        if (run / "benchmarks.csv").exists():
            series.update(_read_columns(run / "benchmarks.csv"))
        series["NRL"] = series.pop("value")
        run_dates = series.pop("date")
        if dates is None:
            dates = run_dates
        elif run_dates != dates:
            raise ValidationError(f"{run}: equity dates differ from the first run")
        for strategy, values in series.items():
            curves[f"{run.name}:{chash}:{strategy}"] = values

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "config_hash", "strategy", *METRIC_KEYS])
        w.writerows(rows)
    with (out / "equity_curves.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *curves])
        for i, d in enumerate(dates):
            w.writerow([d, *(c[i] for c in curves.values())])
    if args.plot:
        _plot(dates, curves, out / args.plot)
    print(f"wrote {out / 'metrics.csv'} ({len(rows)} rows) and {out / 'equity_curves.csv'}")
    return 0


def _read_columns(path: Path) -> dict[str, list[str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = list(zip(*reader)) or [()] * len(header)
    return {h: list(c) for h, c in zip(header, cols)}


def _plot(dates, curves, path: Path) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot")
        return
    from datetime import date as _date
    x = [_date.fromisoformat(d) for d in dates]
    fig, ax = plt.subplots(figsize=(10, 5))
    for label, values in curves.items():
        ax.plot(x, np.array(values, dtype=float), label=label, linewidth=1)
    ax.set_yscale("log")
    ax.set_ylabel("portfolio value")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regretfolio", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate and preprocess raw CSV inputs into a bundle")
    s.add_argument("--prices", required=True)
    s.add_argument("--sentiment")
    s.add_argument("--yields")
    s.add_argument("--sectors")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("backtest", help="run the allocator and benchmarks on a bundle")
    s.add_argument("--config", required=True)
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("grid", help="run a parameter grid (resumable)")
    s.add_argument("--config", required=True)
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--sort-by", default="sharpe")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("report", help="merge run directories into comparison tables")
    s.add_argument("runs", nargs="+")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="file name for an equity-curve PNG inside --out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RegretfolioError, OSError, json.JSONDecodeError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
