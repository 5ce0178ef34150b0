"""Backtest configuration and its flat JSON form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .allocation import ConstraintConfig, LookbackConfig, Objective
from .errors import ConfigError, ValidationError
from .market_data import BOND_ID
from .sentiment_gate import DeltaBound, GateConfig


class Frequency(str, Enum):
    MONTHLY = "monthly"
    QUARTERLY = "quarterly"
    YEARLY = "yearly"

    @classmethod
    def parse(cls, text: str) -> "Frequency":
        key = str(text).strip().lower()
        short = {"m": "monthly", "q": "quarterly", "y": "yearly", "a": "yearly", "annual": "yearly"}
        return cls(short.get(key, key))


@dataclass(frozen=True)
class FeeModel:
    pct_rate: float = 0.0
    per_share: float = 0.0

    def __post_init__(self):
        if self.pct_rate < 0 or self.per_share < 0:
            raise ValidationError("fees must be non-negative")

    @property
    def free(self) -> bool:
        return self.pct_rate == 0 and self.per_share == 0


ALL = "all"
DYNAMIC = "dynamic"


@dataclass(frozen=True)
class BacktestConfig:
    frequency: Frequency = Frequency.QUARTERLY
    objective: Objective = Objective.CALMAR
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    lookback: LookbackConfig = field(default_factory=LookbackConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    # "all", "dynamic", or a tuple of sector names
    cluster_mode: str | tuple[str, ...] = ALL
    hedging: bool = False
    percentile: tuple[float, float] | None = None
    percentile_lookback: int | None = None
    fees: FeeModel = field(default_factory=FeeModel)
    initial_capital: float = 100_000.0
    hedge_eta: float = 0.05
    mad_window: int | None = None
    mad_target_return: float = 0.0
    benchmark_spy: str = "SPY"
    benchmark_gold: str = "GLD"
    bond_ticker: str = BOND_ID
    n_votes: int = 5
    hedge_table: tuple[tuple[str, tuple[str, ...]], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not self.initial_capital > 0:
            raise ConfigError("initial_capital", "must be positive")
        if self.hedge_eta <= 0:
            raise ConfigError("hedge_eta", "must be positive")
        if self.n_votes < 1:
            raise ConfigError("n_votes", "must be at least 1")
        if isinstance(self.cluster_mode, str) and self.cluster_mode not in (ALL, DYNAMIC):
            raise ConfigError("cluster_mode", f"unknown mode '{self.cluster_mode}'")
        if self.percentile is not None:
            lo, hi = self.percentile
            if not 0 <= lo < hi <= 100:
                raise ConfigError("percentile_lo", "need 0 <= percentile_lo < percentile_hi <= 100")

    @property
    def window_k(self) -> int:
        return self.lookback.window_k

    @property
    def hedge_map(self) -> dict[str, list[str]]:
        return {k: list(v) for k, v in self.hedge_table}

    def to_dict(self) -> dict[str, Any]:
        c, lb, g = self.constraints, self.lookback, self.gate
        return {
            "rebalancing_frequency": self.frequency.value,
            "objective": self.objective.value,
            "window_k": lb.window_k,
            "exponential_weighting": lb.exponential,
            "half_life": lb.half_life,
            "a_min": c.a_min,
            "a_max": c.a_max,
            "grid_step": c.grid_step,
            "uniform_adjustment": c.uniform_adjustment,
            "fg_lower": g.lower,
            "fg_upper": g.upper,
            "fg_delta": None if g.delta is None else [g.delta.low, g.delta.high, g.delta.days],
            "liquidate_on_block": g.liquidate_on_block,
            "percentile_lo": None if self.percentile is None else self.percentile[0],
            "percentile_hi": None if self.percentile is None else self.percentile[1],
            "percentile_lookback": self.percentile_lookback,
            "cluster_mode": (self.cluster_mode if isinstance(self.cluster_mode, str)
                             else list(self.cluster_mode)),
            "hedging": self.hedging,
            "fee_pct": self.fees.pct_rate,
            "fee_per_share": self.fees.per_share,
            "initial_capital": self.initial_capital,
            "hedge_eta": self.hedge_eta,
            "mad_window": self.mad_window,
            "mad_target_return": self.mad_target_return,
            "benchmark_spy": self.benchmark_spy,
            "benchmark_gold": self.benchmark_gold,
            "bond_ticker": self.bond_ticker,
            "n_votes": self.n_votes,
            "hedge_table": self.hedge_map,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "BacktestConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        unknown = sorted(set(raw) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        get = raw.get

        def conv(key, fn, default=None):
            value = get(key, default)
            if value is None:
                return None
            try:
                return fn(value)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from None

        def flag(key, default=False):
            value = get(key, default)
            if not isinstance(value, bool):
                raise ConfigError(key, "must be true or false")
            return value

        try:
            constraints = ConstraintConfig(
                a_min=conv("a_min", float, 0.0), a_max=conv("a_max", float, 0.5),
                grid_step=conv("grid_step", float, 0.05),
                uniform_adjustment=flag("uniform_adjustment"),
            )
        except ValidationError as exc:
            raise ConfigError("a_min/a_max/grid_step", str(exc)) from None
        try:
            lookback = LookbackConfig(
                window_k=conv("window_k", _int, 30),
                exponential=flag("exponential_weighting"),
                half_life=conv("half_life", _int),
            )
        except ValidationError as exc:
            raise ConfigError("window_k", str(exc)) from None
        delta = conv("fg_delta", _delta)
        try:
            gate = GateConfig(lower=conv("fg_lower", float), upper=conv("fg_upper", float),
                              delta=delta, liquidate_on_block=flag("liquidate_on_block"))
        except ValidationError as exc:
            raise ConfigError("fg_lower/fg_upper", str(exc)) from None
        lo, hi = conv("percentile_lo", float), conv("percentile_hi", float)
        if (lo is None) != (hi is None):
            raise ConfigError("percentile_lo", "percentile_lo and percentile_hi go together")
        mode = get("cluster_mode", ALL)
        if isinstance(mode, str):
            mode = mode.strip().lower()
        elif isinstance(mode, list) and mode and all(isinstance(s, str) for s in mode):
            mode = tuple(mode)
        else:
            raise ConfigError("cluster_mode", "must be 'all', 'dynamic' or a list of sectors")
        table = get("hedge_table") or {}
        if not isinstance(table, dict):
            raise ConfigError("hedge_table", "must map sector to a list of sectors")
        try:
            fees = FeeModel(conv("fee_pct", float, 0.0), conv("fee_per_share", float, 0.0))
        except ValidationError as exc:
            raise ConfigError("fee_pct/fee_per_share", str(exc)) from None
        return cls(
            frequency=conv("rebalancing_frequency", Frequency.parse, "quarterly"),
            objective=conv("objective", Objective.parse, "calmar"),
            constraints=constraints,
            lookback=lookback,
            gate=gate,
            cluster_mode=mode,
            hedging=flag("hedging"),
            percentile=None if lo is None else (lo, hi),
            percentile_lookback=conv("percentile_lookback", _int),
            fees=fees,
            initial_capital=conv("initial_capital", float, 100_000.0),
            hedge_eta=conv("hedge_eta", float, 0.05),
            mad_window=conv("mad_window", _int),
            mad_target_return=conv("mad_target_return", float, 0.0),
            benchmark_spy=str(get("benchmark_spy", "SPY")),
            benchmark_gold=str(get("benchmark_gold", "GLD")),
            bond_ticker=str(get("bond_ticker", BOND_ID)),
            n_votes=conv("n_votes", _int, 5),
            hedge_table=tuple((str(k), tuple(str(x) for x in v)) for k, v in table.items()),
            seed=conv("seed", _int, 0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _int(v) -> int:
    if isinstance(v, bool) or int(v) != v:
        raise ValueError(f"expected an integer, got {v!r}")
    return int(v)


def _delta(v) -> DeltaBound:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ValueError("fg_delta must be [low, high, days]")
    try:
        return DeltaBound(float(v[0]), float(v[1]), _int(v[2]))
    except ValidationError as exc:
        raise ConfigError("fg_delta", str(exc)) from None


CONFIG_KEYS = tuple(BacktestConfig().to_dict())


def load_config(path) -> BacktestConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path}: invalid JSON ({exc})") from None
    return BacktestConfig.from_dict(raw)
