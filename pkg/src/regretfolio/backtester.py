"""Daily simulation of the regret-guided allocator.

A run starts all in cash. On every scheduled date the engine liquidates
delisted holdings, consults the sentiment gate, optionally narrows the
universe with sector filters, and replaces the portfolio with the
follow-the-leader pick among candidate actions. Portfolio value is marked
to market every trading day.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Callable, Sequence

import numpy as np

from . import advisor as adv
from .allocation import (
    CASH,
    generate_actions,
    percentile_filter,
    select_leader,
    window_returns,
)
from .config import ALL, DYNAMIC, BacktestConfig, FeeModel, Frequency
from .errors import ValidationError
from .market_data import (
    CASH_ID,
    SENTINEL,
    PricePanel,
    SectorMap,
    SentimentSeries,
    active_assets,
)
from .metrics import MetricsReport, compute_report
from .sentiment_gate import GateDecision, GateOutcome, evaluate_gate

log = logging.getLogger(__name__)

INSUFFICIENT_HISTORY = "InsufficientHistory"
# trades smaller than this fraction of portfolio value are not executed
MIN_TRADE = 1e-12


@dataclass(frozen=True)
class PortfolioState:
    cash: float
    shares: np.ndarray  # per panel column; the cash column stays 0
    blacklist: frozenset[str] = frozenset()

    @classmethod
    def all_cash(cls, capital: float, n_assets: int) -> "PortfolioState":
        return cls(float(capital), np.zeros(n_assets))

    def value(self, prices: np.ndarray) -> float:
        held = self.shares != 0
        return float(self.cash + np.sum(self.shares[held] * prices[held]))

    def weights(self, prices: np.ndarray) -> np.ndarray:
        held = self.shares != 0
        w = np.zeros(self.shares.size)
        w[held] = self.shares[held] * prices[held]
        w[CASH] = self.cash
        return w / w.sum()

    def holdings(self, asset_ids: Sequence[str]) -> dict[str, float]:
        return {a: float(s) for a, s in zip(asset_ids, self.shares) if s != 0}


def rebalance_dates(dates: Sequence[date], frequency: Frequency) -> list[int]:
    """Row indices of the first trading day of each calendar period.

    The first date is always included as the initial allocation date.
    Quarters start in January, April, July and October.
    """
    frequency = Frequency(frequency)

    def period(d: date):
        if frequency is Frequency.MONTHLY:
            return (d.year, d.month)
        if frequency is Frequency.QUARTERLY:
            return (d.year, (d.month - 1) // 3)
        return (d.year,)

    out = []
    for i, d in enumerate(dates):
        if i == 0 or period(d) != period(dates[i - 1]):
            out.append(i)
    return out


def _fees(diff_value: np.ndarray, prices: np.ndarray, fees: FeeModel) -> float:
    if fees.free:
        return 0.0
    traded = np.abs(diff_value)
    return float(fees.pct_rate * traded.sum() + fees.per_share * np.sum(traded / prices))


def execute_rebalance(
    state: PortfolioState, target, prices: np.ndarray, fees: FeeModel
) -> tuple[PortfolioState, float, bool]:
    """Trade ``state`` to the ``target`` weights at ``prices``.

    Target values are weights times the pre-fee portfolio value. The fee
    (percentage of traded notional plus a per-share charge) comes out of
    cash. When that would leave cash negative, risky targets are scaled
    down pro rata until cash is non-negative; the third return value flags
    that adjustment.
    """
    target = np.asarray(target, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if target.shape != state.shares.shape:
        raise ValidationError("target and holdings dimensions differ")
    risky = np.arange(target.size) != CASH
    need = risky & ((target > 0) | (state.shares != 0))
    if np.any(prices[need] <= 0):
        bad = int(np.flatnonzero(need & (prices <= 0))[0])
        raise ValidationError(f"no valid price for asset column {bad}")

    px = np.where(need, prices, 1.0)
    value = state.value(px)
    current = np.where(risky, state.shares * px, 0.0)
    desired = np.where(risky, target * value, 0.0)

    def plan(scale: float):
        diff = desired * scale - current
        diff[np.abs(diff) <= MIN_TRADE * value] = 0.0
        fee = _fees(diff[risky], px[risky], fees)
        new_value = current + diff
        cash = value - new_value.sum() - fee
        return diff, fee, cash

    scale, adjusted = 1.0, False
    diff, fee, cash = plan(1.0)
    if cash < 0:
        adjusted = True
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if plan(mid)[2] >= 0:
                lo = mid
            else:
                hi = mid
        scale = lo
        diff, fee, cash = plan(scale)
        log.info("fees exceed cash; risky exposure scaled by %.12f", scale)
    if cash < 0:
        if cash < -1e-9 * value:
            raise ValidationError("cannot fund fees from cash")
        cash = 0.0

    shares = state.shares.copy()
    traded = diff != 0
    shares[traded] = (current[traded] + diff[traded]) / px[traded]
    shares[np.abs(shares) < 1e-15] = 0.0
    return replace(state, cash=float(cash), shares=shares), fee, adjusted


def handle_delisting(
    state: PortfolioState, panel: PricePanel, index: int
) -> tuple[PortfolioState, list[str]]:
    """Sell holdings whose price is the sentinel at ``index`` and blacklist them.

    Sales happen at the last valid price, i.e. the price on the prior row.
    """
    row = panel.prices[index]
    gone = [j for j in np.flatnonzero(state.shares != 0) if row[j] == SENTINEL]
    if not gone:
        return state, []
    cash = state.cash
    shares = state.shares.copy()
    names = []
    for j in gone:
        last = panel.prices[index - 1, j] if index > 0 else SENTINEL
        if last == SENTINEL:
            raise ValidationError(f"{panel.asset_ids[j]} held without a valid price")
        cash += shares[j] * last
        shares[j] = 0.0
        names.append(panel.asset_ids[j])
    return PortfolioState(cash, shares, state.blacklist | frozenset(names)), names


@dataclass(frozen=True)
class TradeRecord:
    date: date
    decision: str
    allocation: dict[str, float]
    fee: float
    gate: str
    advisor: dict = field(default_factory=dict)
    n_actions: int = 0
    leader: tuple | None = None

    def csv_row(self) -> list[str]:
        alloc = {k: round(v, 10) for k, v in self.allocation.items()}
        return [
            self.date.isoformat(),
            self.decision,
            json.dumps(alloc, sort_keys=False),
            repr(float(self.fee)),
            self.gate,
            json.dumps(self.advisor, sort_keys=True),
        ]


TRADE_COLUMNS = ["date", "decision", "allocation", "fee", "gate", "advisor"]


@dataclass(frozen=True)
class BacktestResult:
    dates: tuple[date, ...]
    equity: np.ndarray
    trades: tuple[TradeRecord, ...]
    metrics: MetricsReport
    advisor_log: tuple[dict, ...] = ()
    fee_total: float = 0.0


def risk_free_returns(panel: PricePanel, bond_ticker: str | None) -> np.ndarray:
    """Daily bond returns aligned with panel rows (0 on the first row or when absent)."""
    rf = np.zeros(len(panel))
    if bond_ticker and bond_ticker in panel.asset_ids:
        p = panel.column(bond_ticker)
        ok = (p[1:] != SENTINEL) & (p[:-1] != SENTINEL)
        rf[1:][ok] = p[1:][ok] / p[:-1][ok] - 1.0
    return rf


def _allocation(state: PortfolioState, prices: np.ndarray, ids: Sequence[str]) -> dict[str, float]:
    w = state.weights(np.where(prices > 0, prices, 0.0))
    return {a: float(x) for a, x in zip(ids, w) if x != 0}


Decider = Callable[[int, PortfolioState], tuple[np.ndarray | None, dict]]


def simulate(
    panel: PricePanel,
    schedule: Sequence[int],
    capital: float,
    fees: FeeModel,
    decide: Decider,
) -> tuple[np.ndarray, list[tuple[int, PortfolioState, float, dict]], PortfolioState]:
    """Shared daily loop: delistings, scheduled decisions, mark-to-market.

    ``decide(t, state)`` returns a target weight vector (or ``None`` to
    keep holdings) and a dict of annotations for the log.
    """
    if not panel.asset_ids or panel.asset_ids[0] != CASH_ID:
        raise ValidationError("panel must carry the cash column first")
    n = len(panel)
    todo = set(schedule)
    state = PortfolioState.all_cash(capital, len(panel.asset_ids))
    equity = np.empty(n)
    events = []
    for t in range(n):
        prices = panel.prices[t]
        state, delisted = handle_delisting(state, panel, t)
        if t in todo:
            target, info = decide(t, state)
            fee = 0.0
            if target is not None:
                state, fee, adjusted = execute_rebalance(state, target, prices, fees)
                if adjusted:
                    info["fee_scaled"] = True
            if delisted:
                info["delisted"] = delisted
            events.append((t, state, fee, info))
        equity[t] = state.value(np.where(prices > 0, prices, 0.0))
    return equity, events, state


class _NRLDecider:
    def __init__(self, cfg, panel, sentiment, sectors, provider, rf):
        self.cfg, self.panel, self.sentiment = cfg, panel, sentiment
        self.sectors, self.provider, self.rf = sectors, provider, rf
        self.index = {a: j for j, a in enumerate(panel.asset_ids)}
        self.advisor_log: list[dict] = []

    def _gate(self, t: int) -> GateOutcome:
        if not self.cfg.gate.enabled:
            return GateOutcome(GateDecision.REBALANCE, "pass")
        if self.sentiment is None:
            raise ValidationError("sentiment filters configured but no sentiment series given")
        return evaluate_gate(self.sentiment, t, self.cfg.gate)

    def _sector_universe(self, t: int, universe: set[int], notes: dict) -> set[int]:
        cfg, sectors = self.cfg, self.sectors
        if cfg.cluster_mode == ALL:
            return universe
        if sectors is None:
            raise ValidationError("sector filtering needs a sector map")
        day = self.panel.dates[t].isoformat()
        if cfg.cluster_mode == DYNAMIC:
            chosen = self._dynamic_clusters(t, notes)
        else:
            chosen = list(cfg.cluster_mode)
        if not chosen:
            return universe
        if cfg.hedging:
            hedge = adv.recommend_hedges(self.provider, chosen, sectors.taxonomy)
            notes["hedges"] = hedge.summary()["hedges"]
            self.advisor_log.append({"date": day, "kind": "hedge",
                                     "responses": hedge.raw_responses})
            chosen = list(chosen) + sorted(hedge.sectors() - set(chosen))
        keep = sectors.tickers_in(chosen)
        ids = self.panel.asset_ids
        return {j for j in universe if ids[j] in keep or sectors.sector_of(ids[j]) is None}

    def _dynamic_clusters(self, t: int, notes: dict) -> list[str]:
        day = self.panel.dates[t].isoformat()
        if self.sentiment is None:
            raise ValidationError("dynamic clustering needs a sentiment series")
        lo = max(0, t - adv.CLUSTER_HISTORY + 1)
        window = SentimentSeries(self.sentiment.dates[lo : t + 1], self.sentiment.values[lo : t + 1])
        try:
            rec = adv.recommend_clusters(self.provider, window, self.sectors.taxonomy,
                                         self.cfg.n_votes)
        except ValidationError as exc:
            notes["clusters"] = {"sectors": [], "fallback": True, "reason": str(exc)}
            return []
        notes["clusters"] = rec.summary()
        self.advisor_log.append({"date": day, "kind": "cluster",
                                 "responses": list(rec.raw_responses)})
        return list(rec.sectors)

    def __call__(self, t: int, state: PortfolioState):
        cfg, panel = self.cfg, self.panel
        prices = panel.prices[t]
        gate = self._gate(t)
        info: dict = {"gate": gate.trigger}
        if gate.decision is GateDecision.LIQUIDATE:
            info["decision"] = GateDecision.LIQUIDATE.value
            target = np.zeros(len(panel.asset_ids))
            target[CASH] = 1.0
            return target, info
        if gate.decision is GateDecision.HOLD:
            info["decision"] = GateDecision.HOLD.value
            return None, info

        k = cfg.window_k
        if t - k < 0:
            info["decision"] = INSUFFICIENT_HISTORY
            return None, info

        ids = panel.asset_ids
        universe = {self.index[a] for a in active_assets(panel, t, state.blacklist)}
        notes: dict = {}
        universe = self._sector_universe(t, universe, notes)
        if cfg.percentile is not None:
            lb_days = cfg.percentile_lookback or k
            if t - lb_days >= 0:
                universe = percentile_filter(panel, t, lb_days, *cfg.percentile, universe)
        universe.add(CASH)

        baseline = state.weights(np.where(prices > 0, prices, 0.0))
        held = {int(j) for j in np.flatnonzero(baseline > 0)}
        candidates = sorted(universe | held)
        window, kept = window_returns(panel, t, k, candidates)
        missing = held - set(kept)
        if missing:
            raise ValidationError(
                f"{panel.dates[t]}: held assets lack a full lookback window: "
                + ", ".join(ids[j] for j in sorted(missing))
            )
        buyable = set(kept) & universe
        sell_only = held - buyable
        actions = generate_actions(baseline, cfg.constraints, buyable, sell_only)
        rf = self.rf[t - k + 1 : t + 1]
        pick = select_leader(actions, window, cfg.objective, cfg.lookback, rf, columns=kept)
        info.update(decision=GateDecision.REBALANCE.value, n_actions=len(actions),
                    leader=actions.provenance[pick.index])
        if notes:
            info["advisor"] = notes
        if pick.index == 0:
            return None, info
        return pick.weights, info


def run_backtest(
    cfg: BacktestConfig,
    panel: PricePanel,
    sentiment: SentimentSeries | None = None,
    sectors: SectorMap | None = None,
    provider: adv.AdvisorProvider | None = None,
) -> BacktestResult:
    """Simulate the allocator over ``panel``.

    ``sentiment`` must already be aligned to the panel dates. The risk-free
    series for the final report comes from the bond column named in the
    config, or zeros when the panel has none.
    """
    if sentiment is not None and sentiment.dates != panel.dates:
        raise ValidationError("sentiment series is not aligned with the panel")
    if provider is None and sectors is not None:
        provider = adv.MockProvider(sectors, cfg.hedge_map)
    rf = risk_free_returns(panel, cfg.bond_ticker)
    decider = _NRLDecider(cfg, panel, sentiment, sectors, provider, rf)
    schedule = rebalance_dates(panel.dates, cfg.frequency)
    equity, events, _ = simulate(panel, schedule, cfg.initial_capital, cfg.fees, decider)

    trades = []
    for t, state, fee, info in events:
        trades.append(TradeRecord(
            date=panel.dates[t],
            decision=info.get("decision", ""),
            allocation=_allocation(state, panel.prices[t], panel.asset_ids),
            fee=fee,
            gate=info.get("gate", "pass"),
            advisor=info.get("advisor", {}),
            n_actions=info.get("n_actions", 0),
            leader=info.get("leader"),
        ))
    report = compute_report(equity, rf[1:])
    return BacktestResult(
        dates=panel.dates,
        equity=equity,
        trades=tuple(trades),
        metrics=report,
        advisor_log=tuple(decider.advisor_log),
        fee_total=float(sum(tr.fee for tr in trades)),
    )
