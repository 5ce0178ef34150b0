"""Reference strategies: buy-and-hold, exponentiated-gradient Hedge, online MAD."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .allocation import CASH, ConstraintConfig, generate_actions, window_returns, _portfolio_returns
from .backtester import simulate
from .config import FeeModel
from .errors import ValidationError
from .market_data import SENTINEL, PricePanel, active_assets

log = logging.getLogger(__name__)

# MAD values closer than this are treated as tied
MAD_TIE = 1e-12


def benchmark_buy_and_hold(panel: PricePanel, asset_id: str, initial_capital: float) -> np.ndarray:
    if asset_id not in panel.asset_ids:
        raise ValidationError(f"asset {asset_id} not in panel")
    p = panel.column(asset_id)
    if np.any(p == SENTINEL):
        raise ValidationError(f"asset {asset_id} is not listed over the whole period")
    return initial_capital * (p / p[0])


def hedge_update(w, x, eta: float) -> np.ndarray:
    """One exponentiated-gradient step on price relatives ``x``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    u = w * np.exp(eta * x / np.dot(w, x))
    return u / u.sum()


def full_range_assets(panel: PricePanel, include_cash: bool = False) -> list[int]:
    ok = ~np.any(panel.prices == SENTINEL, axis=0)
    return [j for j in range(len(panel.asset_ids)) if ok[j] and (include_cash or j != CASH)]


def hedge_weight_path(
    panel: PricePanel, eta: float, schedule: Sequence[int], assets: Sequence[int]
) -> list[np.ndarray]:
    """Weights (over ``assets``) chosen at each scheduled row."""
    if eta <= 0:
        raise ValidationError("eta must be positive")
    assets = list(assets)
    if not assets:
        raise ValidationError("hedge benchmark needs at least one asset")
    prices = panel.prices[:, assets]
    if np.any(prices == SENTINEL):
        raise ValidationError("hedge benchmark assets must be listed over the whole period")
    w = np.full(len(assets), 1.0 / len(assets))
    path = [w]
    for prev, cur in zip(schedule, schedule[1:]):
        w = hedge_update(w, prices[cur] / prices[prev], eta)
        path.append(w)
    return path


def benchmark_hedge(
    panel: PricePanel,
    eta: float,
    schedule: Sequence[int],
    initial_capital: float = 1.0,
    assets: Sequence[int] | None = None,
    fees: FeeModel = FeeModel(),
) -> np.ndarray:
    """Equity of the multiplicative-weights portfolio, rebalanced on ``schedule``.

    By default trades every non-cash asset listed over the whole panel.
    """
    assets = full_range_assets(panel) if assets is None else list(assets)
    path = dict(zip(schedule, hedge_weight_path(panel, eta, schedule, assets)))

    def decide(t, state):
        target = np.zeros(len(panel.asset_ids))
        target[assets] = path[t]
        return target, {}

    equity, _, _ = simulate(panel, schedule, initial_capital, fees, decide)
    return equity


def mad_select(weights: np.ndarray, window: np.ndarray, min_mean: float = 0.0) -> tuple[int, bool]:
    """Pick the minimum mean-absolute-deviation action with mean return >= ``min_mean``.

    Ties (within ``MAD_TIE``) go to the lower cash weight, then to the
    earlier action. If no action meets the mean-return floor, the
    constraint is dropped and the second value is True.
    """
    p = _portfolio_returns(np.asarray(weights, dtype=float), np.asarray(window, dtype=float))
    mean = p.mean(axis=1)
    mad = np.abs(p - mean[:, None]).mean(axis=1)
    feasible = mean >= min_mean
    relaxed = not feasible.any()
    if relaxed:
        feasible = np.ones_like(feasible)
    best = mad[feasible].min()
    tied = np.flatnonzero(feasible & (mad <= best + MAD_TIE))
    cash = np.asarray(weights)[tied, CASH]
    return int(tied[np.lexsort((tied, cash))][0]), relaxed


def benchmark_mad(
    panel: PricePanel,
    window: int,
    schedule: Sequence[int],
    constraints: ConstraintConfig,
    initial_capital: float = 1.0,
    fees: FeeModel = FeeModel(),
    target_return: float = 0.0,
) -> np.ndarray:
    """Online MAD portfolio searched over the same perturbation grid as the allocator.

    ``target_return`` is an annualized floor on the window mean return;
    with the default of 0 and cash available the minimizer is often cash.
    """
    min_mean = (1.0 + target_return) ** (1.0 / 252) - 1.0
    index = {a: j for j, a in enumerate(panel.asset_ids)}

    def decide(t, state):
        if t - window < 0:
            return None, {}
        prices = panel.prices[t]
        baseline = state.weights(np.where(prices > 0, prices, 0.0))
        universe = sorted(index[a] for a in active_assets(panel, t, state.blacklist))
        held = {int(j) for j in np.flatnonzero(baseline > 0)}
        win, kept = window_returns(panel, t, window, sorted(set(universe) | held))
        actions = generate_actions(baseline, constraints, kept, held - set(kept))
        pick, relaxed = mad_select(actions.weights[:, kept], win, min_mean)
        if relaxed:
            log.info("%s: no action meets the MAD return floor; constraint relaxed",
                     panel.dates[t])
        return (None if pick == 0 else actions[pick]), {}

    equity, _, _ = simulate(panel, schedule, initial_capital, fees, decide)
    return equity
