"""CSV ingestion and the price-panel preprocessing pipeline.

Prices for inactive periods (before listing, after delisting) carry the
sentinel ``-1.0``. Raw panels straight from :func:`load_price_csv` use NaN
for empty cells instead; :func:`preprocess` converts one into the other.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParseError, ValidationError

SENTINEL = -1.0
CASH_ID = "CASH"
BOND_ID = "BOND10Y"
BOND_MATURITY_YEARS = 10.0


@dataclass(frozen=True)
class PricePanel:
    dates: tuple[date, ...]
    asset_ids: tuple[str, ...]
    prices: np.ndarray  # shape (len(dates), len(asset_ids))

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(self.dates), len(self.asset_ids)):
            raise ValidationError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.asset_ids)} assets"
            )
        if len(set(self.asset_ids)) != len(self.asset_ids):
            raise ValidationError("duplicate asset ids in panel")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ValidationError(f"dates not strictly increasing at {b.isoformat()}")
        prices.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, day: date) -> int:
        try:
            return self._date_index[day]
        except KeyError:
            raise KeyError(f"date {day} not in panel") from None

    def column(self, asset_id: str) -> np.ndarray:
        return self.prices[:, self.asset_ids.index(asset_id)]

    def truncate(self, last: int) -> "PricePanel":
        """Rows ``0..last`` inclusive."""
        return PricePanel(self.dates[: last + 1], self.asset_ids, self.prices[: last + 1])

    @property
    def _date_index(self) -> dict[date, int]:
        cache = self.__dict__.get("_idx_cache")
        if cache is None:
            cache = {d: i for i, d in enumerate(self.dates)}
            object.__setattr__(self, "_idx_cache", cache)
        return cache

    def __eq__(self, other):
        if not isinstance(other, PricePanel):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.asset_ids == other.asset_ids
            and np.array_equal(self.prices, other.prices, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True)
class SentimentSeries:
    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.dates),):
            raise ValidationError("sentiment dates and values differ in length")
        _check_increasing(self.dates, "sentiment")
        bad = np.flatnonzero(~((values >= 0) & (values <= 100)))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                f"sentiment value {values[i]} on {self.dates[i]} outside [0, 100]"
            )
        values.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, SentimentSeries):
            return NotImplemented
        return self.dates == other.dates and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class YieldSeries:
    dates: tuple[date, ...]
    yields: np.ndarray

    def __post_init__(self):
        ys = np.array(self.yields, dtype=float)
        if ys.shape != (len(self.dates),):
            raise ValidationError("yield dates and values differ in length")
        _check_increasing(self.dates, "yield")
        if np.any(~(ys > -1.0)):
            raise ValidationError("yields must be > -1")
        ys.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "yields", ys)

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, YieldSeries):
            return NotImplemented
        return self.dates == other.dates and np.array_equal(self.yields, other.yields)

    __hash__ = None


@dataclass(frozen=True)
class SectorMap:
    """Ticker to sector assignment plus the ordered sector taxonomy.

    ``styles`` optionally tags sectors as ``defensive`` or ``cyclical``; the
    mock advisor uses these tags.
    """

    entries: dict[str, str]
    taxonomy: tuple[str, ...]
    styles: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        known = set(self.taxonomy)
        for ticker, sector in self.entries.items():
            if sector not in known:
                raise ValidationError(f"sector '{sector}' of {ticker} not in taxonomy")
        object.__setattr__(self, "taxonomy", tuple(self.taxonomy))

    def sector_of(self, ticker: str) -> str | None:
        return self.entries.get(ticker)

    def tickers_in(self, sectors: Iterable[str]) -> set[str]:
        wanted = set(sectors)
        return {t for t, s in self.entries.items() if s in wanted}


def _check_increasing(dates: Sequence[date], what: str) -> None:
    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise ValidationError(f"{what} dates not strictly increasing at {b.isoformat()}")


def _parse_date(text: str, row: int, path) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"{path}: row {row}: malformed date '{text}'") from None


def _parse_float(text: str, row: int, col: str, path) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}: row {row}, column {col}: non-numeric value '{text}'") from None
    if not math.isfinite(value):
        raise ParseError(f"{path}: row {row}, column {col}: non-finite value '{text}'")
    return value


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        # row numbers are 1-based data rows (header excluded)
        rows = [(i, r) for i, r in enumerate(reader, start=1) if any(c.strip() for c in r)]
    return header, rows


def _sorted_unique(dated: list[tuple[date, int, object]], path) -> list[tuple[date, int, object]]:
    dated.sort(key=lambda x: x[0])
    for (d0, _, _), (d1, row, _) in zip(dated, dated[1:]):
        if d0 == d1:
            raise ValidationError(f"{path}: row {row}: duplicate date {d1.isoformat()}")
    return dated


def load_price_csv(path) -> PricePanel:
    """Read a ``date,TICKER1,...`` file. Empty cells become NaN (missing)."""
    header, rows = _read_rows(path)
    if not header or header[0].lower() != "date":
        raise ParseError(f"{path}: first column must be 'date'")
    tickers = header[1:]
    if not tickers:
        raise ParseError(f"{path}: no asset columns")
    dated = []
    for row_no, cells in rows:
        if len(cells) > len(header):
            raise ParseError(f"{path}: row {row_no}: too many cells")
        cells = cells + [""] * (len(header) - len(cells))
        d = _parse_date(cells[0], row_no, path)
        values = [
            np.nan if not c.strip() else _parse_float(c, row_no, tickers[j], path)
            for j, c in enumerate(cells[1:])
        ]
        dated.append((d, row_no, values))
    dated = _sorted_unique(dated, path)
    prices = np.array([v for _, _, v in dated], dtype=float).reshape(len(dated), len(tickers))
    return PricePanel(tuple(d for d, _, _ in dated), tuple(tickers), prices)


def _load_two_column(path, value_name: str) -> tuple[tuple[date, ...], np.ndarray]:
    header, rows = _read_rows(path)
    if len(header) < 2 or header[0].lower() != "date" or header[1] != value_name:
        raise ParseError(f"{path}: header must be 'date,{value_name}'")
    dated = []
    for row_no, cells in rows:
        if len(cells) < 2 or not cells[1].strip():
            raise ParseError(f"{path}: row {row_no}: missing {value_name}")
        dated.append((_parse_date(cells[0], row_no, path), row_no,
                      _parse_float(cells[1], row_no, value_name, path)))
    dated = _sorted_unique(dated, path)
    return tuple(d for d, _, _ in dated), np.array([v for _, _, v in dated], dtype=float)


def load_sentiment_csv(path) -> SentimentSeries:
    return SentimentSeries(*_load_two_column(path, "value"))


def load_yield_csv(path) -> YieldSeries:
    return YieldSeries(*_load_two_column(path, "yield10y"))


def load_sector_csv(path) -> SectorMap:
    """Read ``ticker,sector[,style]``. Taxonomy order = first appearance."""
    header, rows = _read_rows(path)
    if len(header) < 2 or [h.lower() for h in header[:2]] != ["ticker", "sector"]:
        raise ParseError(f"{path}: header must be 'ticker,sector[,style]'")
    has_style = len(header) > 2 and header[2].lower() == "style"
    entries: dict[str, str] = {}
    taxonomy: list[str] = []
    styles: dict[str, str] = {}
    for row_no, cells in rows:
        if len(cells) < 2 or not cells[0].strip() or not cells[1].strip():
            raise ParseError(f"{path}: row {row_no}: ticker and sector required")
        ticker, sector = cells[0].strip(), cells[1].strip()
        if ticker in entries:
            raise ValidationError(f"{path}: row {row_no}: ticker {ticker} listed twice")
        entries[ticker] = sector
        if sector not in taxonomy:
            taxonomy.append(sector)
        if has_style and len(cells) > 2 and cells[2].strip():
            style = cells[2].strip().lower()
            if styles.setdefault(sector, style) != style:
                raise ValidationError(
                    f"{path}: row {row_no}: sector {sector} tagged both "
                    f"{styles[sector]} and {style}"
                )
    return SectorMap(entries, tuple(taxonomy), styles)


def _missing(prices: np.ndarray) -> np.ndarray:
    return np.isnan(prices) | (prices == SENTINEL)


def preprocess(raw: PricePanel) -> tuple[PricePanel, dict[str, tuple[date, date]]]:
    """Clean a raw panel.

    Drops rows where every asset is missing, records each asset's first and
    last observed date, fills the pre-entry/post-exit cells with the -1
    sentinel and forward-fills interior gaps.
    """
    prices = np.array(raw.prices, dtype=float)
    miss = _missing(prices)
    keep = ~miss.all(axis=1)
    prices, miss = prices[keep], miss[keep]
    dates = tuple(d for d, k in zip(raw.dates, keep) if k)

    bad = prices[~miss] <= 0
    if bad.any():
        raise ValidationError("non-positive price found; prices must be > 0")

    entry_exit: dict[str, tuple[date, date]] = {}
    out = np.full_like(prices, SENTINEL)
    for j, asset in enumerate(raw.asset_ids):
        observed = np.flatnonzero(~miss[:, j])
        if observed.size == 0:
            raise ValidationError(f"asset {asset} has no prices")
        first, last = int(observed[0]), int(observed[-1])
        entry_exit[asset] = (dates[first], dates[last])
        col = prices[first : last + 1, j]
        m = miss[first : last + 1, j]
        # index of the latest observed cell at or before each position
        idx = np.where(~m, np.arange(col.size), 0)
        np.maximum.accumulate(idx, out=idx)
        out[first : last + 1, j] = col[idx]
    return PricePanel(dates, raw.asset_ids, out), entry_exit


def price_bond(yield_value: float, maturity_years: float) -> float:
    """Price per 100 face of a zero-coupon bond, annual compounding."""
    if not yield_value > -1.0:
        raise DomainError(f"yield {yield_value} must be > -1")
    if not maturity_years > 0:
        raise DomainError(f"maturity {maturity_years} must be positive")
    return 100.0 / (1.0 + yield_value) ** maturity_years


def _forward_fill_onto(
    target: Sequence[date], src_dates: Sequence[date], src_values: np.ndarray, what: str
) -> np.ndarray:
    if not src_dates:
        raise ValidationError(f"{what} series is empty")
    pos = np.searchsorted(np.array(src_dates, dtype="datetime64[D]"),
                          np.array(target, dtype="datetime64[D]"), side="right") - 1
    if pos.size and pos[0] < 0:
        first_bad = target[int(np.flatnonzero(pos < 0)[0])]
        raise ValidationError(f"no {what} value on or before {first_bad.isoformat()}")
    return np.asarray(src_values, dtype=float)[pos]


def synthesize_bond_asset(
    yields: YieldSeries, dates: Sequence[date], maturity_years: float = BOND_MATURITY_YEARS
) -> np.ndarray:
    """Daily price column of a constant-maturity zero-coupon bond."""
    ys = _forward_fill_onto(dates, yields.dates, yields.yields, "yield")
    return np.array([price_bond(float(y), maturity_years) for y in ys])


def align_sentiment(panel: PricePanel, s: SentimentSeries) -> SentimentSeries:
    values = _forward_fill_onto(panel.dates, s.dates, s.values, "sentiment")
    return SentimentSeries(panel.dates, values)


def with_column(panel: PricePanel, asset_id: str, column, position: int | None = None) -> PricePanel:
    column = np.asarray(column, dtype=float).reshape(len(panel), 1)
    pos = panel.prices.shape[1] if position is None else position
    ids = list(panel.asset_ids)
    ids.insert(pos, asset_id)
    prices = np.concatenate([panel.prices[:, :pos], column, panel.prices[:, pos:]], axis=1)
    return PricePanel(panel.dates, tuple(ids), prices)


def with_cash(panel: PricePanel) -> PricePanel:
    """Insert the synthetic cash column (constant 1.0) at index 0."""
    if panel.asset_ids and panel.asset_ids[0] == CASH_ID:
        return panel
    return with_column(panel, CASH_ID, np.ones(len(panel)), position=0)


def active_assets(panel: PricePanel, day, blacklist: Iterable[str] = ()) -> set[str]:
    """Assets tradable on ``day`` (a date or a row index)."""
    i = day if isinstance(day, (int, np.integer)) else panel.index_of(day)
    if not 0 <= i < len(panel):
        raise KeyError(f"row {i} not in panel")
    banned = set(blacklist)
    row = panel.prices[i]
    out = {a for a, p in zip(panel.asset_ids, row) if p != SENTINEL and a not in banned}
    if CASH_ID in panel.asset_ids:
        out.add(CASH_ID)
    return out


def write_price_csv(panel: PricePanel, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.asset_ids])
        for d, row in zip(panel.dates, panel.prices):
            w.writerow([d.isoformat(), *("" if np.isnan(p) else repr(float(p)) for p in row)])


def write_series_csv(dates: Sequence[date], values, header: str, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", header])
        for d, v in zip(dates, values):
            w.writerow([d.isoformat(), repr(float(v))])


def write_sector_csv(sectors: SectorMap, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "sector", "style"])
        for ticker, sector in sectors.entries.items():
            w.writerow([ticker, sector, sectors.styles.get(sector, "")])
