"""Seeded synthetic market data for tests, demos and scenario checks.

``python -m regretfolio.synthetic OUT_DIR`` writes a small demo input set
(prices, sentiment, yields, sectors, plus example configs).
"""

from __future__ import annotations

import argparse
import csv
import json
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .market_data import PricePanel, with_cash


def business_days(start: date, end: date) -> tuple[date, ...]:
    out = []
    d = start
    while d <= end:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def gbm_paths(rng: np.random.Generator, n: int, mu: Sequence[float], sigma: Sequence[float],
              start: float = 100.0) -> np.ndarray:
    """Geometric random walks with annual drift ``mu`` and volatility ``sigma``."""
    mu, sigma = np.asarray(mu, float), np.asarray(sigma, float)
    daily = (mu - 0.5 * sigma**2) / 252 + sigma / np.sqrt(252) * rng.standard_normal((n - 1, mu.size))
    logp = np.vstack([np.zeros(mu.size), np.cumsum(daily, axis=0)])
    return start * np.exp(logp)


def random_panel(seed: int, n_days: int, n_assets: int, start: date = date(2015, 1, 1)) -> PricePanel:
    rng = np.random.default_rng(seed)
    dates = business_days(start, start + timedelta(days=int(n_days * 1.5) + 10))[:n_days]
    mu = rng.uniform(-0.05, 0.15, n_assets)
    sigma = rng.uniform(0.05, 0.35, n_assets)
    prices = gbm_paths(rng, n_days, mu, sigma)
    return with_cash(PricePanel(dates, tuple(f"A{j}" for j in range(n_assets)), prices))


def crash_panel(seed: int = 7) -> PricePanel:
    """Five years where EQ gains 10%/yr, loses 40% during 2018-Q3, then recovers at 10%/yr.

    FLAT stays at 100 throughout. Daily noise inside each regime is
    demeaned so the regime totals are exact.
    """
    rng = np.random.default_rng(seed)
    dates = business_days(date(2015, 1, 1), date(2019, 12, 31))
    n = len(dates)
    crash = np.array([date(2018, 7, 1) <= d < date(2018, 10, 1) for d in dates])
    logret = np.empty(n)
    logret[0] = 0.0
    steps = np.arange(1, n)
    in_crash = crash[steps]
    noise = 0.006 * rng.standard_normal(n - 1)
    for mask, total_per_day in ((in_crash, np.log(0.6) / in_crash.sum()),
                                (~in_crash, np.log(1.1) / 252)):
        noise[mask] -= noise[mask].mean()
        logret[1:][mask] = total_per_day + noise[mask]
    eq = 100.0 * np.exp(np.cumsum(logret))
    prices = np.column_stack([eq, np.full(n, 100.0)])
    return with_cash(PricePanel(dates, ("EQ", "FLAT"), prices))


DEMO_SECTORS = {
    # ticker: (sector, style, annual drift, annual vol)
    "SPY": ("Broad Market", "cyclical", 0.10, 0.17),
    "GLD": ("Precious Metals", "defensive", 0.04, 0.16),
    "XLK": ("Technology", "cyclical", 0.15, 0.24),
    "VGT": ("Technology", "cyclical", 0.14, 0.25),
    "XLE": ("Energy", "cyclical", 0.03, 0.30),
    "XLF": ("Financials", "cyclical", 0.08, 0.22),
    "XLU": ("Utilities", "defensive", 0.06, 0.14),
    "XLP": ("Consumer Staples", "defensive", 0.07, 0.13),
    "XLV": ("Healthcare", "defensive", 0.09, 0.16),
    "IYR": ("Real Estate", "cyclical", 0.06, 0.22),
}


def write_demo_inputs(out, seed: int = 0, start: date = date(2011, 1, 3),
                      end: date = date(2016, 12, 30)) -> dict[str, Path]:
    """Demo CSVs with a late listing, an early delisting and a few data gaps."""
    rng = np.random.default_rng(seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dates = business_days(start, end)
    n = len(dates)
    tickers = list(DEMO_SECTORS)
    mu = [DEMO_SECTORS[t][2] for t in tickers]
    sigma = [DEMO_SECTORS[t][3] for t in tickers]
    prices = gbm_paths(rng, n, mu, sigma)
    prices[: n // 5, tickers.index("VGT")] = np.nan  # lists late
    prices[(4 * n) // 5 :, tickers.index("IYR")] = np.nan  # delists early
    for j in rng.choice(len(tickers), size=4, replace=False):
        prices[rng.integers(n // 4, n // 2), j] = np.nan  # isolated gaps

    paths = {k: out / f"{k}.csv" for k in ("prices", "sentiment", "yields", "sectors")}
    with paths["prices"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *tickers])
        for d, row in zip(dates, prices):
            w.writerow([d.isoformat(), *("" if np.isnan(p) else f"{p:.4f}" for p in row)])

    fg = np.empty(n)
    fg[0] = 50.0
    for i in range(1, n):
        fg[i] = np.clip(fg[i - 1] + 0.03 * (50 - fg[i - 1]) + 3.0 * rng.standard_normal(), 0, 100)
    with paths["sentiment"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        # sentiment starts a year early so dynamic clustering has history
        pre = business_days(start - timedelta(days=366), start - timedelta(days=1))
        for d in pre:
            w.writerow([d.isoformat(), "50.0"])
        w.writerows([d.isoformat(), f"{v:.1f}"] for d, v in zip(dates, fg))

    y = 0.025 + np.cumsum(0.0004 * rng.standard_normal(n))
    with paths["yields"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "yield10y"])
        w.writerows([d.isoformat(), f"{v:.5f}"] for d, v in zip(dates, np.clip(y, 0.001, 0.08)))

    with paths["sectors"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "sector", "style"])
        for t, (sector, style, _, _) in DEMO_SECTORS.items():
            w.writerow([t, sector, style])

    best = {
        "rebalancing_frequency": "quarterly", "objective": "calmar", "window_k": 30,
        "fg_lower": 10, "fg_upper": 90, "fg_delta": [-20, 20, 5], "liquidate_on_block": True,
        "cluster_mode": "all", "hedging": False,
    }
    (out / "config_best.json").write_text(json.dumps(best, indent=2) + "\n", encoding="utf-8")
    dynamic = {**best, "objective": "annualized_return", "window_k": 120,
               "cluster_mode": "dynamic", "hedging": True}
    (out / "config_dynamic.json").write_text(json.dumps(dynamic, indent=2) + "\n", encoding="utf-8")
    grid = {"base": best, "grid": {"objective": ["calmar", "sharpe"], "window_k": [30, 60]}}
    (out / "grid.json").write_text(json.dumps(grid, indent=2) + "\n", encoding="utf-8")
    return paths


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description="write synthetic demo inputs")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    for name, path in write_demo_inputs(args.out, args.seed).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
