"""Return, risk and risk-adjusted performance statistics.

All inputs are per-period simple returns (daily by convention). Ratios
are annualized with a fixed factor of 252 trading days. Metrics whose
denominator vanishes raise :class:`UndefinedMetricError`;
:func:`compute_report` turns those into :class:`Undefined` markers so a
report is always produced.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, UndefinedMetricError, ValidationError

TRADING_DAYS = 252
# Standard deviations at or below this are treated as exactly zero.
ZERO_STD = 1e-14

METRIC_KEYS = ("annualized_return", "volatility", "sharpe", "sortino", "max_drawdown", "calmar")


@dataclass(frozen=True)
class Undefined:
    """Marker for a metric with a zero denominator."""

    reason: str

    def __repr__(self):
        return f"Undefined({self.reason!r})"


MetricValue = Union[float, Undefined]


def _as_returns(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim != 1:
        raise ValidationError("return series must be one-dimensional")
    return r


def annualized_return(r, years: float) -> float:
    r = _as_returns(r)
    if r.size == 0:
        raise ValidationError("empty return series")
    if not years > 0:
        raise DomainError("years must be positive")
    if np.any(r <= -1.0):
        raise DomainError("returns must be > -1")
    growth = float(np.prod(1.0 + r))
    return growth ** (1.0 / years) - 1.0


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1))


def volatility(r) -> float:
    """Sample standard deviation (T-1 divisor) annualized by sqrt(252)."""
    r = _as_returns(r)
    if r.size < 2:
        raise ValidationError("volatility needs at least two returns")
    return _std(r) * math.sqrt(TRADING_DAYS)


def _excess(r, rf) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, rf = _as_returns(r), _as_returns(rf)
    if r.shape != rf.shape:
        raise ValidationError(f"return series lengths differ ({r.size} vs {rf.size})")
    if r.size < 2:
        raise ValidationError("need at least two returns")
    return r, rf, r - rf


def sharpe(r, rf) -> float:
    _, _, ex = _excess(r, rf)
    sd = _std(ex)
    if sd <= ZERO_STD:
        raise UndefinedMetricError("excess returns have zero standard deviation")
    return float(np.mean(ex)) / sd * math.sqrt(TRADING_DAYS)


def sortino(r, rf) -> float:
    """Mean excess return over the std of the returns that fell below rf."""
    r, rf, ex = _excess(r, rf)
    downside = r[r < rf]
    if downside.size == 0:
        raise UndefinedMetricError("no returns below the risk-free rate")
    if downside.size < 2:
        raise UndefinedMetricError("downside deviation needs two observations")
    sd = _std(downside)
    if sd <= ZERO_STD:
        raise UndefinedMetricError("downside returns have zero standard deviation")
    return float(np.mean(ex)) / sd * math.sqrt(TRADING_DAYS)


def max_drawdown(equity) -> float:
    v = np.asarray(equity, dtype=float)
    if v.size == 0:
        raise ValidationError("empty equity curve")
    if np.any(v <= 0):
        raise DomainError("equity values must be positive")
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak))


def calmar(annualized: float, mdd: float) -> float:
    if mdd < 0:
        raise DomainError("max drawdown must be non-negative")
    if mdd == 0:
        raise UndefinedMetricError("max drawdown is zero")
    return annualized / mdd


@dataclass(frozen=True)
class MetricsReport:
    annualized_return: MetricValue
    volatility: MetricValue
    sharpe: MetricValue
    sortino: MetricValue
    max_drawdown: MetricValue
    calmar: MetricValue
    period_years: float

    def to_dict(self) -> dict:
        """Flat record; undefined metrics become ``None`` (JSON null)."""
        return {
            k: (None if isinstance(getattr(self, k), Undefined) else getattr(self, k))
            for k in METRIC_KEYS
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    def csv_row(self) -> list[str]:
        return [
            "undefined" if v is None else repr(float(v)) for v in self.to_dict().values()
        ]

    def defined(self, key: str) -> bool:
        return not isinstance(getattr(self, key), Undefined)


def _try(fn, *args) -> MetricValue:
    try:
        return fn(*args)
    except UndefinedMetricError as exc:
        return Undefined(str(exc))


def returns_from_equity(equity) -> np.ndarray:
    v = np.asarray(equity, dtype=float)
    return v[1:] / v[:-1] - 1.0


def compute_report(equity, rf=None) -> MetricsReport:
    """All six statistics of an equity curve.

    ``rf`` is the per-period risk-free return aligned with the equity
    curve's returns (length ``len(equity) - 1``); zeros when omitted.
    """
    v = np.asarray(equity, dtype=float)
    if v.ndim != 1 or v.size < 3:
        raise ValidationError("equity curve needs at least three points")
    if np.any(v <= 0):
        raise DomainError("equity values must be positive")
    r = returns_from_equity(v)
    rf = np.zeros_like(r) if rf is None else _as_returns(rf)
    if rf.shape != r.shape:
        raise ValidationError(f"risk-free series length {rf.size} != {r.size} returns")
    years = r.size / TRADING_DAYS
    ann = annualized_return(r, years)
    mdd = max_drawdown(v)
    return MetricsReport(
        annualized_return=ann,
        volatility=volatility(r),
        sharpe=_try(sharpe, r, rf),
        sortino=_try(sortino, r, rf),
        max_drawdown=mdd,
        calmar=_try(calmar, ann, mdd),
        period_years=years,
    )
