"""Fear & Greed gating of scheduled rebalances."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError
from .market_data import SentimentSeries


class GateDecision(str, Enum):
    REBALANCE = "Rebalance"
    HOLD = "HoldCurrent"
    LIQUIDATE = "LiquidateToCash"


@dataclass(frozen=True)
class DeltaBound:
    """Allowed range ``[low, high]`` for s(today) - s(``days`` trading days ago)."""

    low: float
    high: float
    days: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValidationError("delta bound needs low <= high")
        if int(self.days) != self.days or self.days < 1:
            raise ValidationError("delta lag must be a positive integer")


@dataclass(frozen=True)
class GateConfig:
    lower: float | None = None
    upper: float | None = None
    delta: DeltaBound | None = None
    liquidate_on_block: bool = False

    def __post_init__(self):
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 100.0:
                raise ValidationError(f"gate {name} bound must lie in [0, 100]")
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValidationError("gate lower bound exceeds upper bound")

    @property
    def enabled(self) -> bool:
        return self.lower is not None or self.upper is not None or self.delta is not None


@dataclass(frozen=True)
class GateOutcome:
    decision: GateDecision
    trigger: str  # "pass", or the name of the failing filter

    @property
    def blocked(self) -> bool:
        return self.decision is not GateDecision.REBALANCE


def evaluate_gate(s: SentimentSeries, day, cfg: GateConfig) -> GateOutcome:
    """Check every configured filter at ``day`` (a date or a row index).

    Bounds are inclusive. The delta filter is skipped when the series does
    not reach back far enough.
    """
    if isinstance(day, int):
        i = day
        if not 0 <= i < len(s):
            raise KeyError(f"row {i} not in sentiment series")
    else:
        try:
            i = s.dates.index(day)
        except ValueError:
            raise KeyError(f"date {day} not in sentiment series") from None
    value = float(s.values[i])

    failed = None
    if cfg.lower is not None and value < cfg.lower:
        failed = "fg_lower"
    elif cfg.upper is not None and value > cfg.upper:
        failed = "fg_upper"
    elif cfg.delta is not None and i - cfg.delta.days >= 0:
        change = value - float(s.values[i - cfg.delta.days])
        if not cfg.delta.low <= change <= cfg.delta.high:
            failed = "fg_delta"

    if failed is None:
        return GateOutcome(GateDecision.REBALANCE, "pass")
    decision = GateDecision.LIQUIDATE if cfg.liquidate_on_block else GateDecision.HOLD
    return GateOutcome(decision, failed)
