import numpy as np
import pytest

from regretfolio.errors import ValidationError
from regretfolio.market_data import SentimentSeries
from regretfolio.sentiment_gate import DeltaBound, GateConfig, GateDecision, evaluate_gate

from conftest import make_dates

BOUNDS = GateConfig(lower=10, upper=90)
DELTA = DeltaBound(-20, 20, 5)


def series(values):
    return SentimentSeries(make_dates(len(values)), np.asarray(values, dtype=float))


def test_inside_bounds_rebalances():
    s = series([50])
    out = evaluate_gate(s, s.dates[0], BOUNDS)
    assert out.decision is GateDecision.REBALANCE and out.trigger == "pass"


def test_below_lower_liquidates():
    s = series([5])
    cfg = GateConfig(lower=10, liquidate_on_block=True)
    out = evaluate_gate(s, 0, cfg)
    assert out.decision is GateDecision.LIQUIDATE and out.trigger == "fg_lower"


@pytest.mark.parametrize("liquidate,expected", [(False, GateDecision.HOLD),
                                                (True, GateDecision.LIQUIDATE)])
def test_delta_blocks(liquidate, expected):
    s = series([40, 41, 42, 43, 44, 65])  # change over 5 days = 25
    out = evaluate_gate(s, 5, GateConfig(delta=DELTA, liquidate_on_block=liquidate))
    assert out.decision is expected and out.trigger == "fg_delta"


def test_delta_skipped_without_history():
    s = series([40, 90])
    assert evaluate_gate(s, 1, GateConfig(delta=DELTA)).decision is GateDecision.REBALANCE


def test_unknown_date():
    s = series([50])
    with pytest.raises(KeyError):
        evaluate_gate(s, make_dates(3)[2], BOUNDS)


def test_no_filters_always_pass():
    s = series([0, 100])
    assert not GateConfig().enabled
    assert evaluate_gate(s, 1, GateConfig()).decision is GateDecision.REBALANCE


def test_config_validation():
    with pytest.raises(ValidationError):
        GateConfig(lower=60, upper=40)
    with pytest.raises(ValidationError):
        GateConfig(lower=-1)
    with pytest.raises(ValidationError):
        DeltaBound(5, -5, 3)
    with pytest.raises(ValidationError):
        DeltaBound(-5, 5, 0)
