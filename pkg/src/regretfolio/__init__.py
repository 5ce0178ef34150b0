"""Regret-guided portfolio allocation with sentiment gating and sector advice."""

from .allocation import (
    ActionSet,
    ConstraintConfig,
    LookbackConfig,
    Objective,
    evaluate_action,
    generate_actions,
    hindsight_regret,
    percentile_filter,
    select_leader,
    window_returns,
)
from .backtester import BacktestResult, execute_rebalance, handle_delisting, rebalance_dates, run_backtest
from .config import BacktestConfig, FeeModel, Frequency, load_config
from .market_data import PricePanel, SectorMap, SentimentSeries, YieldSeries
from .metrics import MetricsReport, Undefined, compute_report
from .sentiment_gate import DeltaBound, GateConfig, GateDecision, evaluate_gate

__version__ = "0.1.0"
