"""Candidate action generation and greedy follow-the-leader selection.

Allocation vectors are indexed like the price panel, with cash at index 0.
Candidate actions are produced by moving one asset's weight along a grid
and pushing the residual either into cash or proportionally into the other
holdings. The leader is the candidate that scores best on a trailing
window under the chosen objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .market_data import SENTINEL, PricePanel
from .metrics import TRADING_DAYS, ZERO_STD, Undefined

CASH = 0
SUM_TOL = 1e-12


class Objective(str, Enum):
    ANNUALIZED_RETURN = "annualized_return"
    SHARPE = "sharpe"
    SORTINO = "sortino"
    CALMAR = "calmar"

    @classmethod
    def parse(cls, name: str) -> "Objective":
        key = str(name).strip().lower().replace(" ", "_").replace("-", "_")
        aliases = {"return": "annualized_return", "annualized_returns": "annualized_return"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class ConstraintConfig:
    a_min: float = 0.0
    a_max: float = 0.5
    grid_step: float = 0.05
    uniform_adjustment: bool = False

    def __post_init__(self):
        if not 0.0 <= self.a_min <= self.a_max <= 1.0:
            raise ValidationError("need 0 <= a_min <= a_max <= 1")
        if not 0.0 < self.grid_step <= 1.0:
            raise ValidationError("grid_step must lie in (0, 1]")
        span = (self.a_max - self.a_min) / self.grid_step
        if abs(span - round(span)) > 1e-9:
            raise ValidationError("grid_step must divide a_max - a_min evenly")

    def grid(self) -> np.ndarray:
        n = int(round((self.a_max - self.a_min) / self.grid_step))
        values = self.a_min + self.grid_step * np.arange(n + 1)
        values[-1] = self.a_max
        return np.round(values, 12)


@dataclass(frozen=True)
class LookbackConfig:
    window_k: int = 30
    exponential: bool = False
    half_life: int | None = None

    def __post_init__(self):
        if int(self.window_k) != self.window_k or self.window_k < 1:
            raise ValidationError("window_k must be a positive integer")
        if self.half_life is not None:
            if int(self.half_life) != self.half_life or self.half_life < 1:
                raise ValidationError("half_life must be a positive integer")
            if self.exponential and self.half_life > self.window_k:
                raise ValidationError("half_life must not exceed window_k")

    @property
    def effective_half_life(self) -> int:
        return self.half_life if self.half_life is not None else max(1, self.window_k // 2)

    def day_weights(self, k: int) -> np.ndarray:
        """Per-day weights (oldest first), normalized to sum to ``k``."""
        if not self.exponential:
            return np.ones(k)
        decay = 2.0 ** (-1.0 / self.effective_half_life)
        w = decay ** np.arange(k - 1, -1, -1, dtype=float)
        return w * (k / w.sum())


@dataclass(frozen=True)
class ActionSet:
    """Candidate allocations; row 0 is always the baseline.

    ``provenance[i]`` is ``(target asset index, new weight)``, or
    ``(None, None)`` for the baseline.
    """

    weights: np.ndarray
    provenance: tuple[tuple[int | None, float | None], ...]

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.weights[i]


def _finalize(w: np.ndarray) -> np.ndarray | None:
    if np.any(w < -SUM_TOL) or np.any(w > 1.0 + SUM_TOL):
        return None
    w = np.clip(w, 0.0, 1.0)
    w[np.abs(w) < SUM_TOL] = 0.0
    resid = 1.0 - w.sum()
    if abs(resid) > 1e-9:
        return None
    if resid:
        j = int(np.argmax(w))
        w[j] += resid
    return w


def generate_actions(
    baseline,
    c: ConstraintConfig,
    active: Iterable[int],
    sell_only: Iterable[int] = (),
) -> ActionSet:
    """Perturb one asset at a time around ``baseline``.

    ``active`` holds the buyable asset indices (cash, index 0, is always
    treated as active). ``sell_only`` holds indices of current holdings
    that may shrink but never grow, e.g. assets that fell out of a sector
    filter. Any asset outside both sets must carry zero baseline weight.
    """
    b = np.asarray(baseline, dtype=float).copy()
    if b.ndim != 1 or abs(b.sum() - 1.0) > 1e-9 or np.any(b < -SUM_TOL):
        raise ValidationError("baseline must be a point on the simplex")
    b = np.clip(b, 0.0, 1.0)
    buyable = set(int(i) for i in active) | {CASH}
    shrink_only = set(int(i) for i in sell_only) - buyable
    allowed = buyable | shrink_only
    if any(b[j] > 0 for j in range(b.size) if j not in allowed):
        raise ValidationError("baseline holds an asset that is neither active nor sell-only")

    rows = [b.copy()]
    prov: list[tuple[int | None, float | None]] = [(None, None)]
    seen = {tuple(np.round(b, 12))}

    for i in sorted(allowed):
        if i == CASH and not c.uniform_adjustment:
            continue  # cash cannot absorb its own residual
        for target in c.grid():
            delta = target - b[i]
            if delta == 0 or (i in shrink_only and delta > 0):
                continue
            w = b.copy()
            w[i] = target
            if not c.uniform_adjustment:
                w[CASH] -= delta
            else:
                # residual spread over other holdings in proportion to weight;
                # when they must grow, only buyable holdings may absorb it
                others = [j for j in range(b.size) if j != i and b[j] > 0
                          and (delta > 0 or j in buyable)]
                mass = float(sum(b[j] for j in others))
                if mass > 0:
                    scale = (mass - delta) / mass
                    for j in others:
                        w[j] = b[j] * scale
                elif delta < 0 and i != CASH:
                    w[CASH] -= delta
                else:
                    continue
            w = _finalize(w)
            if w is None:
                continue
            key = tuple(np.round(w, 12))
            if key in seen:
                continue
            seen.add(key)
            rows.append(w)
            prov.append((i, float(target)))
    weights = np.array(rows)
    weights.setflags(write=False)
    return ActionSet(weights, tuple(prov))


def window_returns(
    panel: PricePanel, index: int, k: int, assets: Sequence[int]
) -> tuple[np.ndarray, list[int]]:
    """Simple daily returns over the ``k`` days ending at row ``index``.

    Returns the ``(k, m)`` matrix and the asset indices kept; assets with a
    sentinel anywhere in the window are dropped.
    """
    if k < 1:
        raise ValidationError("window length must be positive")
    if index - k < 0:
        raise ValidationError(
            f"need {k + 1} rows up to {panel.dates[index]}, only {index + 1} available"
        )
    block = panel.prices[index - k : index + 1]
    kept = [int(j) for j in assets if not np.any(block[:, j] == SENTINEL)]
    sub = block[:, kept]
    return sub[1:] / sub[:-1] - 1.0, kept


def _portfolio_returns(weights: np.ndarray, window: np.ndarray) -> np.ndarray:
    # column-by-column accumulation keeps every row's arithmetic independent
    # of how many actions are scored together
    out = np.zeros((weights.shape[0], window.shape[0]))
    for j in range(window.shape[1]):
        out += weights[:, j : j + 1] * window[:, j][None, :]
    return out


def _weighted_std(x: np.ndarray, w: np.ndarray, mask: np.ndarray | None = None):
    if mask is None:
        mask = np.ones_like(x, dtype=bool)
    wm = w[None, :] * mask
    v1 = wm.sum(axis=1)
    v2 = (wm * w[None, :]).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = (wm * x).sum(axis=1) / v1
        var = (wm * (x - mean[:, None]) ** 2).sum(axis=1) / (v1 - v2 / v1)
    return np.sqrt(np.maximum(var, 0.0)), mask.sum(axis=1)


def score_actions(
    weights: np.ndarray,
    window: np.ndarray,
    obj: Objective,
    lb: LookbackConfig,
    rf_window=None,
) -> np.ndarray:
    """Objective score of every row of ``weights``; NaN marks undefined."""
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    window = np.asarray(window, dtype=float)
    k = window.shape[0]
    if weights.shape[1] != window.shape[1]:
        raise ValidationError("action and window dimensions disagree")
    rf = np.zeros(k) if rf_window is None else np.asarray(rf_window, dtype=float)
    if rf.shape != (k,):
        raise ValidationError("risk-free window length differs from the return window")
    p = _portfolio_returns(weights, window)
    w = lb.day_weights(k)
    obj = Objective(obj)

    log_growth = np.log1p(p) * w[None, :]
    if obj is Objective.ANNUALIZED_RETURN:
        return np.expm1(log_growth.sum(axis=1) * (TRADING_DAYS / k))

    if obj is Objective.CALMAR:
        ann = np.expm1(log_growth.sum(axis=1) * (TRADING_DAYS / k))
        path = np.concatenate([np.zeros((p.shape[0], 1)), np.cumsum(log_growth, axis=1)], axis=1)
        peak = np.maximum.accumulate(path, axis=1)
        mdd = (-np.expm1(path - peak)).max(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(mdd > 0, ann / mdd, np.nan)

    ex = p - rf[None, :]
    mean_ex = (ex * w[None, :]).sum(axis=1) / w.sum()
    if obj is Objective.SHARPE:
        sd, _ = _weighted_std(ex, w)
    else:
        sd, count = _weighted_std(p, w, p < rf[None, :])
        sd = np.where(count >= 2, sd, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sd > ZERO_STD, mean_ex / sd * math.sqrt(TRADING_DAYS), np.nan)


def evaluate_action(a, window, obj: Objective, lb: LookbackConfig, rf_window=None):
    """Score a single allocation; returns a float or :class:`Undefined`."""
    s = float(score_actions(np.asarray(a, dtype=float)[None, :], window, obj, lb, rf_window)[0])
    return Undefined(f"{Objective(obj).value} undefined on window") if math.isnan(s) else s


@dataclass(frozen=True)
class Selection:
    index: int
    weights: np.ndarray
    score: float  # NaN when every candidate was undefined


def argmax_first(scores: np.ndarray) -> int:
    """Index of the largest defined score, earliest on ties; 0 if none defined."""
    defined = ~np.isnan(scores)
    if not defined.any():
        return 0
    best = np.max(scores[defined])
    return int(np.flatnonzero(defined & (scores == best))[0])


def select_leader(
    actions: ActionSet,
    window,
    obj: Objective,
    lb: LookbackConfig,
    rf_window=None,
    columns: Sequence[int] | None = None,
) -> Selection:
    """Best-scoring action on the window, ties to the earliest candidate.

    ``columns`` maps window columns to allocation indices when the window
    covers only a subset of assets; actions must hold no weight elsewhere.
    """
    if len(actions) == 0:
        raise ValidationError("empty action set")
    w = actions.weights
    if columns is not None:
        cols = list(columns)
        outside = np.delete(w, cols, axis=1)
        if outside.size and np.any(outside != 0):
            raise ValidationError("an action holds an asset missing from the window")
        w = w[:, cols]
    scores = score_actions(w, window, obj, lb, rf_window)
    i = argmax_first(scores)
    return Selection(i, actions.weights[i], float(scores[i]))


def percentile_filter(
    panel: PricePanel,
    index: int,
    k: int,
    lo_pct: float,
    hi_pct: float,
    active: Iterable[int],
) -> set[int]:
    """Keep assets whose trailing k-day return ranks within [lo_pct, hi_pct].

    Rank percentile of the p-th worst of n assets is 100 * p / (n - 1)
    (p from 0). Cash is always kept; fewer than three rankable assets makes
    the filter a no-op.
    """
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ValidationError("need 0 <= lo_pct < hi_pct <= 100")
    active = set(int(i) for i in active)
    if index - k < 0:
        raise ValidationError("insufficient history for percentile ranking")
    start, end = panel.prices[index - k], panel.prices[index]
    block = panel.prices[index - k : index + 1]
    rankable = sorted(j for j in active - {CASH} if not np.any(block[:, j] == SENTINEL))
    if len(rankable) < 3:
        return active
    cum = {j: end[j] / start[j] - 1.0 for j in rankable}
    order = sorted(rankable, key=lambda j: (cum[j], j))
    n = len(order)
    kept = {j for p, j in enumerate(order) if lo_pct - 1e-9 <= 100.0 * p / (n - 1) <= hi_pct + 1e-9}
    return kept | {CASH}


def hindsight_regret(
    played: Sequence,
    actions: ActionSet,
    windows: Sequence[np.ndarray],
    obj: Objective,
    lb: LookbackConfig | None = None,
    rf_windows: Sequence | None = None,
) -> float:
    """Average score gap to the best fixed action of ``actions`` in hindsight.

    Each step t scores allocations on ``windows[t]``. Undefined scores count
    as 0.
    """
    played = [np.asarray(a, dtype=float) for a in played]
    if not played or len(actions) == 0:
        raise ValidationError("played sequence and action set must be nonempty")
    if len(windows) != len(played):
        raise ValidationError("one window per played step is required")
    lb = lb or LookbackConfig(window_k=max(1, np.asarray(windows[0]).shape[0]))
    rf_windows = rf_windows if rf_windows is not None else [None] * len(played)
    table = np.empty((len(actions), len(played)))
    mine = np.empty(len(played))
    for t, (a, win, rf) in enumerate(zip(played, windows, rf_windows)):
        table[:, t] = np.nan_to_num(score_actions(actions.weights, win, obj, lb, rf), nan=0.0)
        mine[t] = np.nan_to_num(score_actions(a[None, :], win, obj, lb, rf), nan=0.0)[0]
    # correctly rounded totals so a* and the gap agree exactly
    totals = np.array([math.fsum(row) for row in table])
    best = argmax_first(totals)
    return (totals[best] - math.fsum(mine)) / len(played)
