"""Preprocessed input bundles: one directory, plain CSV plus a manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .market_data import (
    BOND_ID,
    SENTINEL,
    PricePanel,
    SectorMap,
    SentimentSeries,
    align_sentiment,
    load_price_csv,
    load_sector_csv,
    load_sentiment_csv,
    load_yield_csv,
    preprocess,
    synthesize_bond_asset,
    with_cash,
    with_column,
    write_price_csv,
    write_sector_csv,
    write_series_csv,
)

PRICES = "prices.csv"
SENTIMENT = "sentiment.csv"
SECTORS = "sectors.csv"
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class Bundle:
    panel: PricePanel
    sentiment: SentimentSeries | None
    sectors: SectorMap | None
    digest: str


@dataclass(frozen=True)
class IngestSummary:
    entry_exit: dict[str, tuple[date, date]]
    filled_cells: dict[str, int]
    last_date: date

    @property
    def early_exits(self) -> list[str]:
        return [a for a, (_, end) in self.entry_exit.items() if end < self.last_date]

    @property
    def issues(self) -> int:
        return sum(1 for n in self.filled_cells.values() if n) + len(self.early_exits)

    def lines(self) -> list[str]:
        out = []
        for asset, (start, end) in self.entry_exit.items():
            note = []
            if self.filled_cells.get(asset):
                note.append(f"{self.filled_cells[asset]} gap days forward-filled")
            if end < self.last_date:
                note.append("exits early (blacklisted if held)")
            out.append(f"{asset}: entry {start} exit {end}" + (f" [{'; '.join(note)}]" if note else ""))
        out.append(f"{self.issues} issues")
        return out


def ingest(prices, out, sentiment=None, yields=None, sectors=None) -> IngestSummary:
    """Validate and preprocess raw CSVs, then write a bundle into ``out``."""
    raw = load_price_csv(prices)
    panel, entry_exit = preprocess(raw)

    row_of = {d: i for i, d in enumerate(raw.dates)}
    kept_rows = [row_of[d] for d in panel.dates]
    raw_block = raw.prices[kept_rows]
    filled = {}
    for j, asset in enumerate(panel.asset_ids):
        inside = panel.prices[:, j] != SENTINEL
        filled[asset] = int(np.sum(inside & np.isnan(raw_block[:, j])))

    if yields is not None:
        if BOND_ID in panel.asset_ids:
            raise ValidationError(f"price file already has a {BOND_ID} column")
        bond = synthesize_bond_asset(load_yield_csv(yields), panel.dates)
        panel = with_column(panel, BOND_ID, bond)
        entry_exit[BOND_ID] = (panel.dates[0], panel.dates[-1])
        filled[BOND_ID] = 0
    panel = with_cash(panel)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name in (SENTIMENT, SECTORS, MANIFEST):
        (out / name).unlink(missing_ok=True)
    write_price_csv(panel, out / PRICES)
    if sentiment is not None:
        s = align_sentiment(panel, load_sentiment_csv(sentiment))
        write_series_csv(s.dates, s.values, "value", out / SENTIMENT)
    if sectors is not None:
        smap = load_sector_csv(sectors)
        unknown = sorted(set(smap.entries) - set(panel.asset_ids))
        if unknown:
            raise ValidationError(f"sector file names tickers absent from prices: {', '.join(unknown)}")
        write_sector_csv(smap, out / SECTORS)

    manifest = {
        "assets": {a: {"entry": s.isoformat(), "exit": e.isoformat()}
                   for a, (s, e) in entry_exit.items()},
        "files": {name: _sha256(out / name) for name in (PRICES, SENTIMENT, SECTORS)
                  if (out / name).exists()},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    return IngestSummary(entry_exit, filled, panel.dates[-1])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_bundle(path) -> Bundle:
    path = Path(path)
    if not (path / PRICES).exists() or not (path / MANIFEST).exists():
        raise ValidationError(f"{path} is not a bundle (missing {PRICES} or {MANIFEST})")
    raw = load_price_csv(path / PRICES)
    if np.isnan(raw.prices).any():
        raise ValidationError(f"{path / PRICES} has empty cells; re-run ingest")
    panel = PricePanel(raw.dates, raw.asset_ids, raw.prices)
    sentiment = None
    if (path / SENTIMENT).exists():
        sentiment = load_sentiment_csv(path / SENTIMENT)
        if sentiment.dates != panel.dates:
            raise ValidationError("bundle sentiment is not aligned with prices")
    sectors = load_sector_csv(path / SECTORS) if (path / SECTORS).exists() else None
    digest = hashlib.sha256((path / MANIFEST).read_bytes()).hexdigest()[:16]
    return Bundle(panel, sentiment, sectors, digest)
